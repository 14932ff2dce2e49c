"""File formats: unary cost matrices, rasters, label maps and synthetic instances."""

import numpy as np

from .errors import InvalidInput, ParseError


def parse_unary_text(text, path=None):
    """First line ``N M``, then N lines of M decimal costs."""
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), 1)]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty unary file", path)
    lineno, head = lines[0]
    parts = head.split()
    try:
        if len(parts) != 2:
            raise ValueError
        n, m = int(parts[0]), int(parts[1])
    except ValueError:
        raise ParseError(f"expected header 'N M', got {head!r}", path, lineno) from None
    if n < 1 or m < 1:
        raise ParseError(f"N and M must be positive, got {n} {m}", path, lineno)
    body = lines[1:]
    if len(body) != n:
        raise ParseError(f"header declares {n} rows but the file has {len(body)}", path,
                         body[-1][0] if len(body) > n else None)
    out = np.empty((n, m))
    for r, (lineno, ln) in enumerate(body):
        fields = ln.replace(",", " ").split()
        if len(fields) != m:
            raise ParseError(f"expected {m} costs, found {len(fields)}", path, lineno)
        try:
            out[r] = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", path, lineno) from None
        if not np.all(np.isfinite(out[r])):
            raise ParseError("costs must be finite", path, lineno)
    return out


def format_unary_text(unary):
    unary = np.asarray(unary)
    rows = [" ".join(repr(float(v)) for v in row) for row in unary]
    return f"{unary.shape[0]} {unary.shape[1]}\n" + "\n".join(rows) + "\n"


def load_unary(path, binary=False):
    """Text format, or with ``binary`` little-endian int32 N, int32 M then N*M float32."""
    if not binary:
        with open(path) as fh:
            return parse_unary_text(fh.read(), path)
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size < 8:
        raise ParseError("binary unary file shorter than its header", path)
    n, m = (int(v) for v in raw[:8].view("<i4"))
    if n < 1 or m < 1:
        raise ParseError(f"N and M must be positive, got {n} {m}", path)
    if raw.size != 8 + 4 * n * m:
        raise ParseError(f"expected {8 + 4 * n * m} bytes for {n} x {m} costs, found {raw.size}", path)
    out = raw[8:].view("<f4").astype(np.float64).reshape(n, m)
    if not np.all(np.isfinite(out)):
        raise ParseError("costs must be finite", path)
    return out


def save_unary(path, unary, binary=False):
    unary = np.asarray(unary)
    if binary:
        with open(path, "wb") as fh:
            fh.write(np.array(unary.shape, dtype="<i4").tobytes())
            fh.write(unary.astype("<f4").tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(format_unary_text(unary))


def load_image(path):
    """H x W x 3 uint8 raster."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise ParseError(f"cannot read image: {exc}", path) from None


def write_pgm(path, labels, shape):
    """Binary PGM (P5) with labels as gray levels."""
    labels = np.asarray(labels)
    h, w = shape
    if labels.size != h * w:
        raise InvalidInput(f"{labels.size} labels do not fill a {h} x {w} map")
    if labels.size and labels.max() > 255:
        raise InvalidInput("PGM output needs labels below 256")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(labels.astype(np.uint8).tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise ParseError("not a binary PGM", path)
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def grid_shape(n):
    """Most square H x W with H * W = n and H <= W."""
    h = int(np.sqrt(n))
    while n % h:
        h -= 1
    return h, n // h


def synthetic_instance(n, m, seed, unary_noise=1.0, color_noise=20.0):
    """Reproducible (image, unary) pair: a noisy Voronoi label map and its colours.

    Returns the H x W x 3 uint8 image, the N x M unary matrix and the ground truth.
    """
    if n < 1 or m < 1:
        raise InvalidInput(f"N and M must be positive, got {n} {m}")
    rng = np.random.default_rng(seed)
    h, w = grid_shape(n)
    n_sites = 2 * m
    sites = rng.random((n_sites, 2)) * [w, h]
    site_label = np.concatenate([np.arange(m), rng.integers(0, m, n_sites - m)])
    rows, cols = np.mgrid[0:h, 0:w]
    pix = np.column_stack([cols.ravel(), rows.ravel()]) + 0.5
    nearest = np.argmin(((pix[:, None, :] - sites[None]) ** 2).sum(-1), axis=1)
    truth = site_label[nearest]
    palette = rng.integers(0, 256, size=(m, 3))
    image = np.clip(palette[truth] + rng.normal(0.0, color_noise, (n, 3)), 0, 255)
    image = np.rint(image).astype(np.uint8).reshape(h, w, 3)
    scores = 2.0 * np.eye(m)[truth] + rng.normal(0.0, unary_noise, (n, m))
    logp = scores - scores.max(axis=1, keepdims=True)
    logp -= np.log(np.exp(logp).sum(axis=1, keepdims=True))
    return image, -logp, truth
