"""Writes the tiny ONNX fixtures used by the backend tests.

Both models are hand-wired (no training) so their outputs are predictable:

* redness_detector.onnx: YOLO-style head, output (1, 5, 16). The 512x512 frame
  is split into a 4x4 grid of 128 px cells; each cell reports its own box and a
  confidence of sigmoid(20 * (mean redness - 0.1)).
* redness_segmenter.onnx: per-pixel logit 20 * (redness - 0.1), output
  (1, 1, 512, 512). Use with sigmoid activation and unit normalization.

redness = R - (G + B) / 2 on inputs scaled to [0, 1].

    python tools/make_test_models.py tests/data
"""

import sys
from pathlib import Path

import torch
from torch import nn

GRID = 4
CELL = 512 // GRID


def redness(x):
    return x[:, 0:1] - 0.5 * (x[:, 1:2] + x[:, 2:3])


class Detector(nn.Module):
    def __init__(self):
        super().__init__()
        centers = (torch.arange(GRID, dtype=torch.float32) + 0.5) * CELL
        cy, cx = torch.meshgrid(centers, centers, indexing="ij")
        side = torch.full((GRID * GRID,), float(CELL))
        boxes = torch.stack([cx.reshape(-1), cy.reshape(-1), side, side])
        self.register_buffer("boxes", boxes.unsqueeze(0))

    def forward(self, x):
        pooled = nn.functional.avg_pool2d(redness(x), CELL)
        conf = torch.sigmoid(20.0 * (pooled - 0.1)).reshape(1, 1, GRID * GRID)
        return torch.cat([self.boxes, conf], dim=1)


class Segmenter(nn.Module):
    def forward(self, x):
        return 20.0 * (redness(x) - 0.1)


def export(model, path):
    dummy = torch.zeros(1, 3, 512, 512)
    torch.onnx.export(model.eval(), dummy, str(path), opset_version=11,
                      input_names=["images"], output_names=["output"], dynamo=False)


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
    out.mkdir(parents=True, exist_ok=True)
    export(Detector(), out / "redness_detector.onnx")
    export(Segmenter(), out / "redness_segmenter.onnx")


if __name__ == "__main__":
    main()
