"""Command-line entry point ``bsl-lab``.

Exit codes: 0 when every check passes, 2 for bad input or a failed check,
1 for anything unexpected. Reports are JSON on stdout unless ``--out`` names a
file. Heavy modules are imported inside the commands so that the thread cap
from BSL_LAB_THREADS is in place before numpy loads.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import click

from bsl_lab.errors import BslError

EXIT_OK, EXIT_INTERNAL, EXIT_FAIL = 0, 1, 2
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class CheckFailed(Exception):
    """Raised by a command whose report came back with failures."""


def _apply_thread_cap() -> None:
    raw = os.environ.get("BSL_LAB_THREADS")
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        raise click.BadParameter(f"BSL_LAB_THREADS={raw!r} is not an integer")
    if n < 1:
        raise click.BadParameter("BSL_LAB_THREADS must be at least 1")
    for var in THREAD_VARS:
        os.environ[var] = str(n)


def _emit(doc, out: str | None) -> None:
    text = doc if isinstance(doc, str) else json.dumps(doc, indent=2, default=_jsonable)
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        click.echo(text)


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _load_scheme(path: str):
    from bsl_lab.combinatorics import scheme_from_dict
    from bsl_lab.errors import ParseError

    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if isinstance(doc, dict) and "scheme" in doc:
        doc = doc["scheme"]
    try:
        return scheme_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed scheme ({exc})") from exc


def _load_map(path: str):
    from bsl_lab.circle_map import load_map
    from bsl_lab.errors import ParseError

    if not Path(path).is_file():
        raise ParseError(f"{path}: no such file")
    return load_map(path)


def _scheme_doc(s) -> dict:
    return {
        "two_n": s.two_n,
        "iota": list(s.iota[1:]),
        "gamma_cycles": [list(c) for c in s.gamma_cycles],
        "delta_cycles": [list(c) for c in s.delta_cycles],
        "k": {j: s.k(j) for j in s.labels},
        "c": {j: s.c(j) for j in s.labels},
        "d": {j: s.d(j) for j in s.labels},
    }


@click.group()
@click.version_option(package_name="artifact", prog_name="bsl-lab")
def cli() -> None:
    """Bowen-Series-like circle maps: schemes, maps, graphs, actions, surfaces."""


# ---------------------------------------------------------------- scheme


@cli.group()
def scheme() -> None:
    """Validate and enumerate pairing schemes."""


@scheme.command("validate")
@click.argument("path", type=click.Path())
@click.option("--out", default=None, help="Write the report here instead of stdout.")
def scheme_validate(path: str, out: str | None) -> None:
    """Check a scheme file and print its cycle tables."""
    from bsl_lab.combinatorics import check_perm_identities

    s = _load_scheme(path)
    rep = check_perm_identities(s)
    doc = _scheme_doc(s)
    doc["identities"] = rep.checked
    doc["violations"] = rep.violations
    _emit(doc, out)
    if not rep.ok:
        raise CheckFailed(f"{len(rep.violations)} identity violations")


@scheme.command("enumerate")
@click.option("--two-n", "two_n", type=int, required=True, help="Number of labels 2N.")
@click.option("--out", default=None)
def scheme_enumerate(two_n: int, out: str | None) -> None:
    """List every valid scheme on 2N labels."""
    from bsl_lab.combinatorics import enumerate_involutions

    schemes = enumerate_involutions(two_n)
    _emit({"two_n": two_n, "count": len(schemes),
           "schemes": [list(s.iota[1:]) for s in schemes]}, out)


# ---------------------------------------------------------------- map


@cli.group("map")
def map_group() -> None:
    """Synthesize and verify piecewise affine maps."""


@map_group.command("synth")
@click.argument("scheme_path", type=click.Path())
@click.option("--hosts", default=None, help="Comma-separated host labels a_1..a_2N.")
@click.option("--search", is_flag=True, help="Search host tables when the default fails.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--tol", type=float, default=1e-9, show_default=True)
@click.option("-o", "--out", default=None, help="Output map file.")
def map_synth(scheme_path: str, hosts: str | None, search: bool, seed: int, tol: float,
              out: str | None) -> None:
    """Build a Markov map for a scheme and check its expansion conditions."""
    from bsl_lab.circle_map import search_hosts, synthesize_markov
    from bsl_lab.errors import ParseError, VerificationFailed

    s = _load_scheme(scheme_path)
    table = None
    if hosts:
        try:
            table = [0] + [int(x) for x in hosts.split(",")]
        except ValueError as exc:
            raise ParseError(f"bad --hosts value {hosts!r}") from exc
    try:
        m = synthesize_markov(s, table, tol)
    except VerificationFailed:
        if not search:
            raise
        m = synthesize_markov(s, search_hosts(s, seed=seed), tol)
    _emit(json.dumps(m.to_dict(), indent=2), out)


@map_group.command("verify")
@click.argument("map_path", type=click.Path())
@click.option("--tol", type=float, default=1e-9, show_default=True)
@click.option("--out", default=None)
def map_verify(map_path: str, tol: float, out: str | None) -> None:
    """Report the expansion and coincidence conditions of a map."""
    from bsl_lab.circle_map import verify_conditions

    m = _load_map(map_path)
    rep = verify_conditions(m, tol)
    doc = asdict(rep)
    doc["ok"] = rep.ok
    doc["lambda"] = m.lam
    _emit(doc, out)
    if not rep.ok:
        raise CheckFailed("; ".join(rep.failures))


# ---------------------------------------------------------------- graph


@cli.group()
def graph() -> None:
    """Build the folded graph of a map."""


@graph.command("build")
@click.argument("map_path", type=click.Path())
@click.option("--level", type=int, default=6, show_default=True, help="Build depth.")
@click.option("--radius", type=int, default=2, show_default=True, help="Ball exported to DOT.")
@click.option("--dot", "dot_path", default=None, help="Write a DOT file of the ball.")
@click.option("--tol", type=float, default=1e-9, show_default=True)
@click.option("--out", default=None)
def graph_build(map_path: str, level: int, radius: int, dot_path: str | None, tol: float,
                out: str | None) -> None:
    """Fold the real words of a map up to a depth and summarise the result."""
    import numpy as np

    from bsl_lab.dyngraph import KIND_CASCADE, KIND_PAIR, export_dot, graph_from_map, tree_size

    m = _load_map(map_path)
    g = graph_from_map(m, level, tol)
    spheres = np.diff(g.level_start[: level + 2]).tolist()
    doc = {
        "depth": level,
        "classes": g.n_classes,
        "sphere_sizes": spheres,
        "tree_size": tree_size(g.two_n, level),
        "pair_classes": int(np.sum(g.kind == KIND_PAIR)),
        "cascade_classes": int(np.sum(g.kind == KIND_CASCADE)),
        "full_link_degrees": sorted(set(g.degree(np.flatnonzero(g.full_link())).tolist())),
    }
    if dot_path:
        Path(dot_path).write_text(export_dot(g, min(radius, level)))
        doc["dot"] = dot_path
    _emit(doc, out)


# ---------------------------------------------------------------- action


@cli.group()
def action() -> None:
    """Certify the group action on the folded graph."""


@action.command("check")
@click.argument("map_path", type=click.Path())
@click.option("--radius", type=int, default=4, show_default=True)
@click.option("--samples", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--cocompact-depth", type=int, default=None,
              help="Depth swept by the cocompactness check (default: build depth).")
@click.option("--tol", type=float, default=1e-9, show_default=True)
@click.option("--out", default=None)
def action_check(map_path: str, radius: int, samples: int, seed: int,
                 cocompact_depth: int | None, tol: float, out: str | None) -> None:
    """Isometry, order, freeness, cocompactness and proper discontinuity."""
    from bsl_lab.dyngraph import graph_from_map
    from bsl_lab.group_action import check_geometric

    m = _load_map(map_path)
    # the mover count around two radius-2 balls needs words past length 5
    depth = max(radius + max(m.scheme.k(j) for j in m.scheme.labels), 8)
    g = graph_from_map(m, depth, tol)
    rep = check_geometric(g, radius, samples=samples, seed=seed,
                          cocompact_depth=cocompact_depth)
    _emit(rep.to_dict(), out)
    if not rep.ok:
        raise CheckFailed("geometric action checks failed")


# ---------------------------------------------------------------- surface


@cli.group()
def surface() -> None:
    """The 2-complex of relation faces and its quotient."""


@surface.command("report")
@click.argument("map_path", type=click.Path())
@click.option("--radius", type=int, default=2, show_default=True)
@click.option("--tol", type=float, default=1e-9, show_default=True)
@click.option("--out", default=None)
def surface_report_cmd(map_path: str, radius: int, tol: float, out: str | None) -> None:
    """Face incidence, vertex links and the Euler characteristic of the quotient."""
    from bsl_lab.dyngraph import graph_from_map
    from bsl_lab.surface_complex import surface_report

    m = _load_map(map_path)
    depth = radius + max(m.scheme.k(j) for j in m.scheme.labels)
    g = graph_from_map(m, depth, tol)
    rep = surface_report(g, radius)
    _emit(rep.to_dict(), out)
    if not rep.ok:
        raise CheckFailed("surface checks failed")


def main(argv: list[str] | None = None) -> int:
    try:
        _apply_thread_cap()
        cli.main(args=argv, prog_name="bsl-lab", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_FAIL
    except click.exceptions.Abort:
        return EXIT_FAIL
    except CheckFailed as exc:
        click.echo(f"check failed: {exc}", err=True)
        return EXIT_FAIL
    except BslError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_FAIL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
