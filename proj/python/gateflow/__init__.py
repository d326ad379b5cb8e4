"""Python access to the gateflow runtime.

Experiments come from a Registry; results land in an on-disk store that
the query and export helpers read back.
"""

from ._gateflow import (
    GateflowError,
    Registry,
    aggregate,
    best_trial,
    extract_io,
    format_program,
    list_runs,
    list_studies,
    merge_spool,
    parse_csv,
    query,
    render_svg,
    to_csv,
)

__all__ = [
    "GateflowError",
    "Registry",
    "aggregate",
    "best_trial",
    "extract_io",
    "format_program",
    "list_runs",
    "list_studies",
    "merge_spool",
    "parse_csv",
    "query",
    "render_svg",
    "to_csv",
]


def error_code(exc):
    """Code name carried by a GateflowError, e.g. 'UnusedArgument'."""
    return exc.args[1] if len(exc.args) > 1 else None
