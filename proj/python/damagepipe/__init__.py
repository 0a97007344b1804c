"""Python bindings for the damagepipe building damage assessment pipeline."""

from ._core import (
    BackendUnavailable,
    ConfigError,
    ContractViolation,
    Error,
    GeometryError,
    LoadError,
    MappingError,
    MockServer,
    ParseError,
    ProtocolError,
    aggregate_rankings,
    band_of,
    chunk_tokens,
    classification_metrics,
    clip_score,
    f1_from,
    iou,
    load_config_snapshot,
    match_detections,
    pad_bbox,
    parse_wkt_polygon,
    polygon_to_bbox,
    run_command,
    scale_bbox,
    word_frequencies,
    write_synthetic_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")]


def main() -> int:
    """Console entry point mirroring the C++ executable."""
    import sys

    code, out, err = run_command(sys.argv[1:])
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
