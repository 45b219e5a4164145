"""Binary field containers, CSV tables and run manifests."""

import json
import platform
import struct
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy

from .cellsolve import CellSolutions, HomogenizedModel
from .errors import ContainerFormatError, MissingArtifact
from .grid import Grid
from .llg import MagnetizationField, Trajectory
from .performance import get_memory_usage

MAGIC = b"HOMOMAG\x00"
CONTAINER_VERSION = 1
FLOAT_FORMAT = "%.12e"
MANIFEST_NAME = "manifest.json"

PathLike = Union[str, Path]


def write_container(path: PathLike, fields: Dict[str, np.ndarray], n: int, N: int,
                    attrs: Optional[Dict[str, Any]] = None) -> Path:
    """Write named float64 arrays to a little-endian container.

    Layout: magic, <IIII (version, n, N, field count), <Q attribute length,
    JSON attributes, a directory of (<H name length, name, <B ndim, <I dims,
    <Q offset) entries, then the raw C-ordered data.
    """
    path = Path(path)
    attr_bytes = json.dumps(attrs or {}, sort_keys=True).encode("utf-8")
    arrays = [(name, np.ascontiguousarray(value, dtype="<f8")) for name, value in fields.items()]

    directory = b""
    offset = 0
    for name, arr in arrays:
        encoded = name.encode("utf-8")
        directory += struct.pack("<H", len(encoded)) + encoded
        directory += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        directory += struct.pack("<Q", offset)
        offset += arr.nbytes

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIII", CONTAINER_VERSION, n, N, len(arrays)))
        f.write(struct.pack("<Q", len(attr_bytes)))
        f.write(attr_bytes)
        f.write(directory)
        for _, arr in arrays:
            f.write(arr.tobytes(order="C"))
    return path


def read_container(path: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read a container written by write_container.

    Returns:
        Tuple of (fields, header with version, n, N and attrs)

    Raises:
        MissingArtifact: If the file does not exist
        ContainerFormatError: On a bad magic, unknown version or truncated data
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"container not found: {path}")
    data = path.read_bytes()
    try:
        if data[:8] != MAGIC:
            raise ContainerFormatError(f"{path.name}: not a homomag container")
        version, n, N, count = struct.unpack_from("<IIII", data, 8)
        if version != CONTAINER_VERSION:
            raise ContainerFormatError(f"{path.name}: unsupported container version {version}")
        pos = 24
        (attr_len,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        attrs = json.loads(data[pos:pos + attr_len].decode("utf-8"))
        pos += attr_len
        entries = []
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            (offset,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            entries.append((name, shape, offset))
        fields = {}
        for name, shape, offset in entries:
            size = int(np.prod(shape)) * 8
            start = pos + offset
            if start + size > len(data):
                raise ContainerFormatError(f"{path.name}: field '{name}' is truncated")
            fields[name] = np.frombuffer(data, dtype="<f8", count=size // 8, offset=start).reshape(shape).copy()
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerFormatError(f"{path.name}: corrupt container ({e})") from e
    return fields, {"version": version, "n": n, "N": N, "attrs": attrs}


def save_cells(path: PathLike, cells: CellSolutions, hom: HomogenizedModel,
               diagnostics: Optional[Dict[str, Any]] = None) -> Path:
    """Cell container: every cell field plus the homogenized model in the attributes."""
    attrs = {"kind": "cells", "homogenized": hom.model_dump(mode="json"),
             "diagnostics": _jsonable(diagnostics or {})}
    return write_container(path, cells.fields(), cells.grid.n, cells.grid.N, attrs)


def load_cells(path: PathLike) -> Tuple[CellSolutions, HomogenizedModel]:
    fields, header = read_container(path)
    if header["attrs"].get("kind") != "cells":
        raise ContainerFormatError(f"{Path(path).name}: not a cell container")
    grid = Grid(header["n"], header["N"], periodic=True)
    return CellSolutions.from_fields(grid, fields), HomogenizedModel(**header["attrs"]["homogenized"])


def save_snapshots(path: PathLike, snapshots: List[MagnetizationField], level: str,
                   attrs: Optional[Dict[str, Any]] = None) -> Path:
    """Field container with one (N..., 3) array per snapshot, times in the attributes."""
    if not snapshots:
        raise ValueError("no snapshots to save")
    grid = snapshots[0].grid
    fields = {f"m_{k:05d}": snap.values for k, snap in enumerate(snapshots)}
    meta = {"kind": "snapshots", "level": level, "times": [snap.t for snap in snapshots]}
    meta.update(attrs or {})
    return write_container(path, fields, grid.n, grid.N, meta)


def load_snapshots(path: PathLike) -> Tuple[List[MagnetizationField], Dict[str, Any]]:
    fields, header = read_container(path)
    attrs = header["attrs"]
    if attrs.get("kind") != "snapshots":
        raise ContainerFormatError(f"{Path(path).name}: not a snapshot container")
    grid = Grid(header["n"], header["N"])
    snaps = [MagnetizationField(grid=grid, values=fields[f"m_{k:05d}"], t=t)
             for k, t in enumerate(attrs["times"])]
    return snaps, attrs


def save_trajectory(out_dir: PathLike, trajectory: Trajectory,
                    attrs: Optional[Dict[str, Any]] = None) -> List[Path]:
    """snapshots.bin and energy_log.csv of one run."""
    out_dir = Path(out_dir)
    paths = [save_snapshots(out_dir / "snapshots.bin", trajectory.snapshots, trajectory.level,
                            {"tau": trajectory.tau, **(attrs or {})}),
             write_table(trajectory.energy_log, out_dir / "energy_log.csv")]
    return paths


def write_table(df: pd.DataFrame, path: PathLike) -> Path:
    """CSV with a fixed float format so identical runs are byte-identical."""
    path = Path(path)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_cell_summary(path: PathLike, hom: HomogenizedModel, diagnostics: Dict[str, Any]) -> Path:
    path = Path(path)
    lines = [hom.summary()]
    for key in ("a0_asymmetry", "H_d_symmetry_defect", "H_d_trace_integral"):
        if key in diagnostics:
            lines.append(f"{key} = {diagnostics[key]:.3e}\n")
    means = diagnostics.get("second_order_rhs_means", {})
    if means:
        worst = max(abs(v) for v in means.values())
        lines.append(f"max_second_order_rhs_mean = {worst:.3e}\n")
    path.write_text("".join(lines))
    return path


def resolve_output_dir(out: Optional[PathLike], subcommand: str, config_hash: str,
                       root: PathLike = "runs") -> Path:
    """Use ``out`` or the content-addressed runs/<subcommand>-<hash12>."""
    path = Path(out) if out else Path(root) / f"{subcommand}-{config_hash[:12]}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_manifest(out_dir: PathLike, subcommand: str, config: Dict[str, Any], config_hash: str,
                   outputs: List[PathLike], started: datetime,
                   extra: Optional[Dict[str, Any]] = None) -> Path:
    """Write manifest.json; called last so its presence marks a complete run."""
    from .. import __version__

    out_dir = Path(out_dir)
    manifest = {
        "config_hash": config_hash,
        "tool": "homomag",
        "tool_version": __version__,
        "subcommand": subcommand,
        "started": started.isoformat(),
        "finished": datetime.now().isoformat(),
        "outputs": sorted(Path(p).name for p in outputs),
        "config": config,
        "environment": {
            "python_version": sys.version,
            "platform": platform.platform(),
            "numpy_version": np.__version__,
            "scipy_version": scipy.__version__,
            "pandas_version": pd.__version__,
        },
        "peak_rss_mb": get_memory_usage(),
    }
    if extra:
        manifest["extra"] = _jsonable(extra)
    path = out_dir / MANIFEST_NAME
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, default=str)
    return path


def read_manifest(out_dir: PathLike) -> Dict[str, Any]:
    path = Path(out_dir) / MANIFEST_NAME
    if not path.exists():
        raise MissingArtifact(f"no manifest in {out_dir}")
    with open(path) as f:
        return json.load(f)
