"""Reference values for the no-reference metrics and SSIM.

Independent numpy implementation (skimage for SSIM). Test images are built
from integer levels so both sides see bit-identical inputs:

    python3 metrics_oracle.py
"""
import math

import numpy as np
from skimage.metrics import structural_similarity

M64 = (1 << 64) - 1
PALETTE = [(230, 51, 26), (26, 179, 77), (51, 77, 230), (242, 230, 51), (26, 26, 38), (217, 217, 230)]


def mix64(z):
    z = (z + 0x9E3779B97F4A7C15) & M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


def oracle_image(seed, w=128, h=128):
    shift = 58 + seed % 3
    half = 1 << (63 - shift)
    img = np.zeros((h, w, 3))
    for y in range(h):
        for x in range(w):
            base = PALETTE[(x // 16 + 3 * (y // 16) + seed) % 6]
            for c in range(3):
                n = mix64((seed * 1000003 + (y * w + x) * 3 + c) & M64) >> shift
                img[y, x, c] = min(max(base[c] + n - half, 0), 255) / 255.0
    return img


def luma(img):
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def sobel(p):
    q = np.pad(p, 1, mode="edge")
    gx = (q[:-2, 2:] - q[:-2, :-2]) + 2 * (q[1:-1, 2:] - q[1:-1, :-2]) + (q[2:, 2:] - q[2:, :-2])
    gy = (q[2:, :-2] - q[:-2, :-2]) + 2 * (q[2:, 1:-1] - q[:-2, 1:-1]) + (q[2:, 2:] - q[:-2, 2:])
    return gx, gy


def blocks(p, k=8):
    h, w = (p.shape[0] // k) * k, (p.shape[1] // k) * k
    b = p[:h, :w].reshape(h // k, k, w // k, k).swapaxes(1, 2).reshape(-1, k * k)
    return b.max(axis=1), b.min(axis=1)


def uicm(img):
    r, g, b = (img[..., i].ravel() * 255 for i in range(3))
    out = []
    for v in (r - g, (r + g) / 2 - b):
        s = np.sort(v)
        k = len(s)
        tl, tr = math.ceil(0.1 * k), math.floor(0.1 * k)
        mu = s[tl:k - tr].mean()
        out.append((mu, np.mean((v - mu) ** 2)))
    (mrg, vrg), (myb, vyb) = out
    return -0.0268 * math.sqrt(mrg ** 2 + myb ** 2) + 0.1586 * math.sqrt(vrg + vyb)


def uism(img):
    total = 0.0
    for c, wt in zip(range(3), (0.299, 0.587, 0.114)):
        ch = img[..., c]
        gx, gy = sobel(ch * 255)
        edge = np.sqrt(gx ** 2 + gy ** 2) * ch
        mx, mn = blocks(edge)
        total += wt * 2.0 / len(mx) * np.sum(np.log((mx + 1) / (mn + 1)))
    return total


def uiconm(img):
    mx, mn = blocks(luma(img) * 255)
    ok = (mx + mn > 0) & (mx != mn)
    r = (mx[ok] - mn[ok]) / (mx[ok] + mn[ok])
    return -np.sum(r * np.log(r)) / len(mx)


def uiqm(img):
    a, b, c = uicm(img), uism(img), uiconm(img)
    return 0.0282 * a + 0.2953 * b + 3.5753 * c, a, b, c


def lab(img):
    m = np.array([[0.4124564, 0.3575761, 0.1804375],
                  [0.2126729, 0.7151522, 0.0721750],
                  [0.0193339, 0.1191920, 0.9503041]])
    lin = np.where(img <= 0.04045, img / 12.92, ((img + 0.055) / 1.055) ** 2.4)
    xyz = lin @ m.T / m.sum(axis=1)
    eps, kap = 216 / 24389, 24389 / 27
    f = np.where(xyz > eps, np.cbrt(xyz), (kap * xyz + 16) / 116)
    L = np.where(xyz[..., 1] > eps, 116 * f[..., 1] - 16, kap * xyz[..., 1])
    return L, 500 * (f[..., 0] - f[..., 1]), 200 * (f[..., 1] - f[..., 2])


def uciqe(img):
    L, a, b = (v.ravel() for v in lab(img))
    chroma = np.sqrt(a ** 2 + b ** 2)
    den = np.sqrt(chroma ** 2 + L ** 2)
    sat = np.divide(chroma, den, out=np.zeros_like(chroma), where=den > 0)
    con = (np.percentile(L, 99) - np.percentile(L, 1)) / 100
    return 0.4680 * chroma.std() + 0.2745 * con + 0.2576 * sat.mean()


def cpbd(img):
    Y = luma(img) * 255
    H, W = Y.shape
    gx, gy = sobel(Y)
    b = gx ** 2 + gy ** 2
    horiz = np.abs(gx) >= np.abs(gy)
    q = np.pad(b, 1, mode="edge")
    thin_h = (b >= q[1:-1, :-2]) & (b >= q[1:-1, 2:])
    thin_v = (b >= q[:-2, 1:-1]) & (b >= q[2:, 1:-1])
    edge = (b > 4 * b.mean()) & np.where(horiz, thin_h, thin_v)

    def width(line, p, rising):
        sgn = 1 if rising else -1
        hi = p
        while hi + 1 < len(line) and sgn * (line[hi + 1] - line[hi]) > 0:
            hi += 1
        lo = p
        while lo > 0 and sgn * (line[lo] - line[lo - 1]) > 0:
            lo -= 1
        return hi - lo

    total = sharp = 0
    for by in range(0, H - 63, 64):
        for bx in range(0, W - 63, 64):
            e = edge[by:by + 64, bx:bx + 64]
            if e.sum() <= 0.002 * 64 * 64:
                continue
            blk = Y[by:by + 64, bx:bx + 64]
            jnb = 5.0 if blk.max() - blk.min() <= 50 else 3.0
            for yy, xx in zip(*np.nonzero(e)):
                y, x = by + yy, bx + xx
                if horiz[y, x]:
                    w = width(Y[y, :], x, gx[y, x] > 0)
                else:
                    w = width(Y[:, x], y, gy[y, x] > 0)
                p = 1 - math.exp(-((w / jnb) ** 3.6))
                total += 1
                sharp += math.floor(100 * p + 0.5) <= 63
    return sharp / total if total else 0.0


def ssim(a, b):
    return structural_similarity(luma(a), luma(b), gaussian_weights=True, sigma=1.5,
                                 use_sample_covariance=False, data_range=1.0)


if __name__ == "__main__":
    for seed in range(5):
        img = oracle_image(seed)
        q, a, b, c = uiqm(img)
        print(f"seed {seed}: uiqm {q:.12f} uicm {a:.12f} uism {b:.12f} uiconm {c:.12f} "
              f"uciqe {uciqe(img):.12f} cpbd {cpbd(img):.12f}")
    x = oracle_image(1)
    print(f"ssim(x, 1-x) seed 1: {ssim(x, 1 - x):.12f}")
    print(f"ssim(seed0, seed3): {ssim(oracle_image(0), oracle_image(3)):.12f}")
