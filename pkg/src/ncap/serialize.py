"""Float-exact JSON and CSV emission, config digests, model checkpoints.

Every float is written with 17 significant digits ('%.17g'), which
round-trips any IEEE-754 double exactly; the stock json module cannot
customize float repr, hence the small emitter here. Emission is
deterministic: key order is preserved as constructed (or sorted for
digests), so identical inputs produce identical bytes.
"""

import hashlib
import json

import numpy as np


def format_float(x):
    """Shortest-ish decimal form of a double that round-trips exactly."""
    if not np.isfinite(x):
        raise ValueError("non-finite value %r cannot be serialized" % (x,))
    s = "%.17g" % x
    return s


def _emit(obj, out, indent, level, sort_keys):
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        keys = sorted(obj) if sort_keys else list(obj)
        out.append("{\n")
        for i, k in enumerate(keys):
            if not isinstance(k, str):
                raise TypeError("JSON keys must be strings, got %r" % (k,))
            out.append(pad_in + json.dumps(k) + ": ")
            _emit(obj[k], out, indent, level + 1, sort_keys)
            out.append(",\n" if i < len(keys) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad_in)
            _emit(v, out, indent, level + 1, sort_keys)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), out, indent, level, sort_keys)
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif obj is None:
        out.append("null")
    else:
        raise TypeError("cannot serialize %r" % (type(obj),))


def dumps(obj, indent=2, sort_keys=False):
    out = []
    _emit(obj, out, indent, 0, sort_keys)
    out.append("\n")
    return "".join(out)


def dump(obj, path, indent=2, sort_keys=False):
    with open(path, "w") as fh:
        fh.write(dumps(obj, indent=indent, sort_keys=sort_keys))


def load(path):
    with open(path) as fh:
        return json.load(fh)


def config_digest(config):
    """Content hash of a config dict, independent of key order."""
    canon = dumps(config, indent=0, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def check_digest(artifact, expected, what):
    """Raise if an artifact's recorded config digest does not match."""
    got = artifact.get("config_digest")
    if got != expected:
        raise ValueError(
            "%s was produced under config digest %s, current config is %s"
            % (what, got, expected)
        )


def write_csv(path, header, rows):
    """Plain CSV with float-exact cells; all values numeric or strings."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, str):
                    cells.append(v)
                elif v is None:
                    cells.append("")
                elif isinstance(v, (bool, np.bool_)):
                    cells.append("1" if v else "0")
                elif isinstance(v, (int, np.integer)):
                    cells.append(str(int(v)))
                else:
                    cells.append(format_float(float(v)))
            fh.write(",".join(cells) + "\n")


def read_csv(path):
    """Inverse of write_csv: returns (header, list of string-cell rows)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() != ""]
    if not lines:
        raise ValueError("empty csv %s" % path)
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    for row in rows:
        if len(row) != len(header):
            raise ValueError("ragged row in %s: %r" % (path, row))
    return header, rows


# -- model checkpoints -------------------------------------------------------

def checkpoint_dict(model, seed=None, epoch=None):
    return {
        "spec": {
            "layer_sizes": list(model.spec.layer_sizes),
            "frozen": list(model.spec.frozen),
        },
        "weights": [w for w in model.weights],
        "seed": seed,
        "epoch": epoch,
    }


def save_checkpoint(model, path, seed=None, epoch=None):
    dump(checkpoint_dict(model, seed=seed, epoch=epoch), path)


def load_checkpoint(path):
    """Returns (model, seed, epoch)."""
    from .mlp import MlpModel, MlpSpec

    doc = load(path)
    spec = MlpSpec(doc["spec"]["layer_sizes"], frozen=doc["spec"]["frozen"])
    weights = [np.asarray(w, dtype=np.float64) for w in doc["weights"]]
    model = MlpModel(spec, weights)
    return model, doc.get("seed"), doc.get("epoch")
