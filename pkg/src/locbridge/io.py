"""Persistent formats: binary dataset files, model files and flat config files.

Dataset layout (all little-endian)::

    4s   magic  b"LSBS"
    u32  version
    u64  d
    u64  M
    f64  payload[d * M]   row-major d x M, column j is sample j

In memory samples are rows, so the payload is the transpose of the
(M, d) array handed to :func:`write_dataset`.
"""

import hashlib
import json
import os
import struct

import numpy as np

from .exceptions import DataError, IntegrityError, ParameterError
from .bridge import SchrodingerBridge
from .kde import KernelDenoiser, LocalizedKernelDenoiser
from .localization import LocalizedSchrodingerBridge, sets_from_lists, sets_to_lists

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "write_dataset",
    "read_dataset",
    "read_metadata",
    "dataset_hash",
    "write_csv",
    "save_model",
    "load_model",
    "parse_config",
    "read_config",
]

MAGIC = b"LSBS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
_PAYLOAD_DTYPE = np.dtype("<f8")


def _payload(samples):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise DataError(f"samples must be 2-D (M, d), got shape {samples.shape}")
    return np.ascontiguousarray(samples.T, dtype=_PAYLOAD_DTYPE)


def dataset_hash(samples):
    """sha256 over the header fields and payload bytes of ``samples`` (M, d)."""
    payload = _payload(samples)
    d, M = payload.shape
    h = hashlib.sha256(_HEADER.pack(MAGIC, FORMAT_VERSION, d, M))
    h.update(payload.tobytes())
    return h.hexdigest()


def _sidecar(path):
    return path + ".json"


def write_dataset(path, samples, metadata=None, csv=False):
    """Write ``samples`` (M, d) with a JSON sidecar; returns the content hash."""
    payload = _payload(samples)
    d, M = payload.shape
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, d, M))
            fh.write(payload.tobytes())
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write dataset: {exc.strerror}", path) from exc
    digest = dataset_hash(samples)
    meta = dict(metadata or {})
    meta.update(d=d, M=M, version=FORMAT_VERSION, sha256=digest)
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)
    if csv:
        write_csv(os.path.splitext(path)[0] + ".csv", samples)
    return digest


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def read_dataset(path):
    """Read a dataset file; returns an (M, d) float64 array."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read dataset: {exc.strerror}", path) from exc
    if len(raw) < _HEADER.size:
        raise IntegrityError(f"{path}: truncated header")
    magic, version, d, M = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise IntegrityError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise IntegrityError(f"{path}: unsupported format version {version}")
    expected = d * M * 8
    if len(raw) - _HEADER.size != expected:
        raise IntegrityError(
            f"{path}: payload has {len(raw) - _HEADER.size} bytes, expected {expected}")
    payload = np.frombuffer(raw, dtype=_PAYLOAD_DTYPE, offset=_HEADER.size)
    return payload.reshape(d, M).T.astype(np.float64)


def read_metadata(path):
    """Sidecar metadata of a dataset file (empty dict when missing)."""
    try:
        with open(_sidecar(path)) as fh:
            return json.load(fh)
    except FileNotFoundError:
        return {}


def write_csv(path, samples, header=None):
    """CSV mirror: one sample per line, full float64 precision."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if header is None:
        header = ",".join(f"x{i}" for i in range(samples.shape[1]))
    np.savetxt(path, samples, delimiter=",", header=header, comments="", fmt="%.17g")


# --------------------------------------------------------------------------
# model files
# --------------------------------------------------------------------------
_MODEL_KINDS = {
    "localized_bridge": LocalizedSchrodingerBridge,
    "localized_kde": LocalizedKernelDenoiser,
    "bridge": SchrodingerBridge,
    "kde": KernelDenoiser,
}


def _kind(model):
    for kind, cls in _MODEL_KINDS.items():
        if type(model) is cls:
            return kind
    raise ParameterError(f"cannot serialize {type(model).__name__}")


def save_model(path, model, dataset_path=None):
    """Store a fitted model without its training data.

    The data is referenced by content hash (and optionally by path); the
    samples themselves are supplied again at load time.
    """
    kind = _kind(model)
    M, d = model.data_.shape
    arrays = dict(
        kind=np.array(kind),
        data_sha256=np.array(dataset_hash(model.data_)),
        dataset_path=np.array(dataset_path or ""),
        d=np.array(d), M=np.array(M),
        epsilon=np.array(float(model.epsilon)),
        far_field=np.array(model.far_field),
        metric_scales=model.metric_scales_,
    )
    if kind.startswith("localized"):
        lists = sets_to_lists(model.sets_)
        arrays.update(set_sizes=np.array([len(s) for s in lists]),
                      set_flat=np.concatenate([np.asarray(s) for s in lists]))
    if kind == "localized_bridge":
        arrays.update(local_weights=model.local_weights_,
                      sinkhorn_residuals=model.sinkhorn_residuals_)
    elif kind == "bridge":
        arrays.update(local_weights=model.v_[None],
                      sinkhorn_residuals=np.array([model.sinkhorn_residual_]))
    if kind in ("localized_bridge", "bridge"):
        arrays.update(sinkhorn_tol=np.array(float(model.sinkhorn_tol)),
                      max_iter=np.array(int(model.max_iter)))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path, samples=None):
    """Rebuild a model saved by :func:`save_model`.

    ``samples`` defaults to the dataset path recorded in the model file.
    Raises :class:`IntegrityError` when the samples do not match the
    stored hash, shape or set cardinalities.
    """
    try:
        with np.load(path, allow_pickle=False) as f:
            z = {k: f[k] for k in f.files}
    except (OSError, ValueError) as exc:
        raise IntegrityError(f"{path}: not a model file ({exc})") from exc
    kind = str(z.get("kind", ""))
    cls = _MODEL_KINDS.get(kind)
    if cls is None:
        raise IntegrityError(f"{path}: unknown model kind {kind!r}")
    if samples is None:
        ref = str(z["dataset_path"])
        if not ref:
            raise ParameterError("model file has no dataset path; pass samples")
        samples = read_dataset(ref)
    samples = np.asarray(samples, dtype=np.float64)
    d, M = int(z["d"]), int(z["M"])
    if samples.shape != (M, d):
        raise IntegrityError(f"dataset has shape {samples.shape}, model expects {(M, d)}")
    if dataset_hash(samples) != str(z["data_sha256"]):
        raise IntegrityError("dataset content hash does not match the model file")

    params = dict(epsilon=float(z["epsilon"]), metric_scales=z["metric_scales"],
                  far_field=str(z["far_field"]))
    n_sets = 1
    if kind.startswith("localized"):
        sizes = z["set_sizes"]
        lists = np.split(z["set_flat"], np.cumsum(sizes)[:-1])
        params["sets"] = sets_from_lists([lst.tolist() for lst in lists])
        n_sets = len(params["sets"])
    if kind in ("localized_bridge", "bridge"):
        params.update(sinkhorn_tol=float(z["sinkhorn_tol"]), max_iter=int(z["max_iter"]))
    model = cls(**params)
    if kind in ("kde", "localized_kde"):
        return model.fit(samples)

    weights = z["local_weights"]
    if weights.shape != (n_sets, M):
        raise IntegrityError(
            f"stored weights have shape {weights.shape}, expected {(n_sets, M)}")
    if not np.all(weights > 0):
        raise IntegrityError("stored Sinkhorn weights must be positive")
    if kind == "bridge":
        return model._restore(samples, weights[0], float(z["sinkhorn_residuals"][0]))
    return model._restore(samples, weights, z["sinkhorn_residuals"])


# --------------------------------------------------------------------------
# config files
# --------------------------------------------------------------------------
def parse_config(text):
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Values stay strings; typing happens against the experiment config.
    """
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParameterError(f"config line {lineno}: empty key")
        out[key] = value
    return out


def read_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read config: {exc.strerror}", path) from exc
