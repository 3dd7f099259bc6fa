"""Trains the reference model on exported windows and writes an EPW1 file.

Usage:
    cargo run --release -p ear-ecg --example export_training_windows -- /tmp/win
    python3 tools/train_fixture.py /tmp/win crates/core/tests/fixtures/reference.epw

The autoencoder (encoder + tanh decoder) is fitted first; the classifier is
then trained on the frozen encoder.
"""

import struct
import sys
from pathlib import Path

import numpy as np
import torch
from torch import nn

WINDOW = 500
KIND = {nn.Conv1d: 0, nn.ConvTranspose1d: 1, nn.ReLU: 2, nn.Tanh: 3, nn.Sigmoid: 4}


def encoder():
    return nn.Sequential(
        nn.Conv1d(1, 8, 7, 1, 3), nn.ReLU(),
        nn.Conv1d(8, 16, 7, 1, 3), nn.ReLU(),
        nn.Conv1d(16, 16, 5, 2, 2), nn.ReLU(),
        nn.Conv1d(16, 16, 7, 1, 3), nn.ReLU(),
    )


def head(act):
    return nn.Sequential(
        nn.ConvTranspose1d(16, 16, 4, 2, 1), nn.ReLU(),
        nn.Conv1d(16, 16, 7, 1, 3), nn.ReLU(),
        nn.Conv1d(16, 16, 5, 1, 2), nn.ReLU(),
        nn.Conv1d(16, 1, 7, 1, 3), act,
    )


def load(win_dir):
    d = Path(win_dir)
    x = np.fromfile(d / "inputs.f32", dtype="<f4").reshape(-1, 1, WINDOW)
    t = np.fromfile(d / "targets.f32", dtype="<f4").reshape(-1, 1, WINDOW)
    y = np.fromfile(d / "labels.u8", dtype=np.uint8).reshape(-1, 1, WINDOW)
    return torch.from_numpy(x), torch.from_numpy(t), torch.from_numpy(y.astype(np.float32))


def fit(params, loss_fn, data, epochs, lr, seed):
    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(params, lr=lr)
    n = data[0].shape[0]
    for epoch in range(epochs):
        perm = torch.randperm(n, generator=gen)
        total = 0.0
        for i in range(0, n, 64):
            idx = perm[i:i + 64]
            loss = loss_fn(*(d[idx] for d in data))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        print(f"epoch {epoch}: loss {total / n:.5f}", flush=True)


def write_epw(path, parts):
    out = bytearray(b"EPW1") + struct.pack("<I", 1)
    for part in parts:
        out += struct.pack("<I", len(part))
        channels = 1
        for layer in part:
            kind = KIND[type(layer)]
            if kind <= 1:
                w = layer.weight.detach().numpy().astype("<f4")
                b = layer.bias.detach().numpy().astype("<f4")
                channels = layer.out_channels
                out += struct.pack("<B5I", kind, layer.in_channels, channels,
                                   layer.kernel_size[0], layer.stride[0], layer.padding[0])
                out += w.tobytes() + b.tobytes()
            else:
                out += struct.pack("<B5I", kind, channels, channels, 0, 1, 0)
    Path(path).write_bytes(bytes(out))


def main():
    win_dir, out_path = sys.argv[1], sys.argv[2]
    torch.manual_seed(0)
    x, t, y = load(win_dir)
    enc, dec, cls = encoder(), head(nn.Tanh()), head(nn.Sigmoid())

    mse = nn.MSELoss()
    fit(list(enc.parameters()) + list(dec.parameters()),
        lambda xb, tb: mse(dec(enc(xb)), tb), (x, t), epochs=12, lr=2e-3, seed=1)

    for p in enc.parameters():
        p.requires_grad_(False)
    bce = nn.BCELoss(reduction="none")

    def cls_loss(xb, yb):
        p = cls(enc(xb))
        w = 1.0 + 9.0 * yb
        return (bce(p, yb) * w).mean()

    fit(cls.parameters(), cls_loss, (x, y), epochs=20, lr=2e-3, seed=2)
    write_epw(out_path, [enc, dec, cls])
    print(f"wrote {out_path}")


if __name__ == "__main__":
    main()
