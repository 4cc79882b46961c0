"""Snapshot and basis archives.

A snapshot archive is a directory holding ``manifest.json`` and one record file,
either little-endian float64 (``records.bin``, short binary header) or decimal
CSV (``records.csv``).  A basis archive is a text file with a ``#`` header and
one mode per row.  Every write goes to a temporary file that is then renamed.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .problem import FsiState

FIELDS = ("u", "p", "d", "v", "a", "g")
MAGIC = b"FSIOSNAP"
HEADER = struct.Struct("<8sIQQ")         # magic, version, n_records, record length
VERSION = 1


class ArchiveError(OSError):
    pass


def write_atomic(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x):
    """Shortest decimal that round-trips a float64 (at most 17 significant digits)."""
    return repr(float(x))


def csv_bytes(header, rows):
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) if isinstance(v, float) else str(v) for v in r))
    return ("\n".join(lines) + "\n").encode()


def write_csv(path, header, rows):
    write_atomic(path, csv_bytes(header, rows))


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:] if ln]


def scenario_hash(settings: dict) -> str:
    """Hash of the scenario-defining settings (canonical JSON)."""
    blob = json.dumps(settings, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# --- snapshots -------------------------------------------------------------------

class SnapshotArchive:
    def __init__(self, manifest: dict, records: np.ndarray):
        self.manifest = manifest
        self.records = np.asarray(records, dtype=float)
        n = self.record_length
        if self.records.ndim != 2 or self.records.shape[1] != n:
            raise ArchiveError(f"records have shape {self.records.shape}, manifest expects length {n}")
        if self.records.shape[0] != len(manifest["steps"]):
            raise ArchiveError("record count does not match the manifest step list")
        if np.any(np.diff(manifest["steps"]) <= 0):
            raise ArchiveError("step indices must be strictly increasing")

    @property
    def record_length(self):
        return sum(self.manifest["dofs"][f] for f in FIELDS)

    @classmethod
    def from_states(cls, states, settings_hash, dt, dt_s=None, extra=None):
        s0 = states[0]
        dofs = {f: int(len(getattr(s0, f))) for f in FIELDS}
        manifest = {"format": "fsiopt-snapshots", "version": VERSION, "scenario_hash": settings_hash,
                    "dofs": dofs, "dt": float(dt), "dt_s": float(dt if dt_s is None else dt_s),
                    "steps": [int(s.k) for s in states], "times": [float(s.t) for s in states]}
        if extra:
            manifest.update(extra)
        rec = np.array([np.concatenate([getattr(s, f) for f in FIELDS]) for s in states])
        return cls(manifest, rec)

    def split(self, i):
        out, o = {}, 0
        for f in FIELDS:
            n = self.manifest["dofs"][f]
            out[f] = self.records[i, o:o + n].copy()
            o += n
        return out

    def states(self):
        """Rebuild ``FsiState`` objects; BDF history comes from the preceding record."""
        out = []
        steps, times = self.manifest["steps"], self.manifest["times"]
        for i in range(len(steps)):
            r = self.split(i)
            prev = self.split(i - 1) if i > 0 and steps[i - 1] == steps[i] - 1 else r
            out.append(FsiState(k=steps[i], t=times[i], u=r["u"], p=r["p"], d=r["d"], v=r["v"],
                                a=r["a"], g=r["g"], u_prev=prev["u"], d_prev=prev["d"]))
        return out

    def write(self, directory, text=False):
        directory = Path(directory)
        man = dict(self.manifest, encoding="text" if text else "f8le")
        if text:
            names = [f"{f}{i}" for f in FIELDS for i in range(self.manifest["dofs"][f])]
            rows = [[int(k)] + [float(x) for x in r] for k, r in zip(self.manifest["steps"], self.records)]
            write_atomic(directory / "records.csv", csv_bytes(["step"] + names, rows))
        else:
            head = HEADER.pack(MAGIC, VERSION, self.records.shape[0], self.records.shape[1])
            write_atomic(directory / "records.bin", head + self.records.astype("<f8").tobytes())
        write_atomic(directory / "manifest.json", (json.dumps(man, sort_keys=True, indent=1) + "\n").encode())

    @classmethod
    def read(cls, directory):
        directory = Path(directory)
        try:
            man = json.loads((directory / "manifest.json").read_text())
        except (OSError, ValueError) as exc:
            raise ArchiveError(f"cannot read manifest in {directory}: {exc}") from exc
        if man.get("format") != "fsiopt-snapshots":
            raise ArchiveError(f"{directory} is not a snapshot archive")
        if man.get("encoding") == "text":
            _, rows = read_csv(directory / "records.csv")
            rec = np.array([[float(x) for x in r[1:]] for r in rows])
        else:
            raw = (directory / "records.bin").read_bytes()
            magic, ver, n, m = HEADER.unpack_from(raw)
            if magic != MAGIC or ver != VERSION:
                raise ArchiveError("bad record file header")
            rec = np.frombuffer(raw, dtype="<f8", offset=HEADER.size)
            if rec.size != n * m:
                raise ArchiveError(f"record file truncated: {rec.size} of {n * m} values")
            rec = rec.reshape(n, m).astype(float)
        man.pop("encoding", None)
        return cls(man, rec)


# --- bases ----------------------------------------------------------------------------

def write_basis(path, Z, space, inner="", eigenvalues=(), **meta):
    """One mode per row, 17 significant digits; header carries the metadata."""
    Z = np.asarray(Z, dtype=float)
    head = {"space": space, "n": int(Z.shape[1]), "dofs": int(Z.shape[0]), "inner": inner, **meta}
    lines = ["# " + json.dumps(head, sort_keys=True),
             "# eigenvalues " + " ".join("%.17g" % x for x in np.asarray(eigenvalues, float))]
    lines += [" ".join("%.17g" % x for x in col) for col in Z.T]
    write_atomic(path, ("\n".join(lines) + "\n").encode())


def read_basis(path):
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("# ") or not lines[1].startswith("# eigenvalues"):
        raise ArchiveError(f"{path}: malformed basis header")
    head = json.loads(lines[0][2:])
    eig = np.array([float(x) for x in lines[1].split()[2:]])
    rows = [np.array([float(x) for x in ln.split()]) for ln in lines[2:] if ln.strip()]
    Z = np.array(rows).T if rows else np.zeros((head["dofs"], 0))
    if Z.shape != (head["dofs"], head["n"]):
        raise ArchiveError(f"{path}: modes have shape {Z.shape}, header says {(head['dofs'], head['n'])}")
    return Z, eig, head
