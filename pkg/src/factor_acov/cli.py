"""Command-line front end.

Reads a covariance or correlation matrix from a text file, fits a factor
solution, and prints the estimates with asymptotic standard errors, either as
a table (estimate with the standard error in parentheses) or as JSON. With
``--simulate m`` it also runs a Wishart simulation study and reports
empirical against theoretical standard errors of the uniquenesses.

Exit codes: 0 success, 1 usage error, 2 an error raised by the library (bad
input matrix, Heywood case, non-convergence, singular system, ...).
"""

import argparse
import json
import sys
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import List, Optional

import numpy as np

from . import extraction
from .errors import FactorAcovError, InvalidInput, ParseError
from .jacobians import assemble_se, loading_jacobian
from .linalg_core import SymmetricMatrix
from .rotation import rotated_se, varimax
from .sigma_cov import acov_sample_correlations, acov_sample_covariances, load_external_acov
from .simulation import run_simulation

SYMMETRY_TOL = 1e-10

METHOD_TITLES = {
    "ipcfa": "Iterated Principal Component",
    "pfa": "Principal",
    "least_square": "Least-Square",
    "alpha": "Alpha",
    "image": "Image",
}
NUMBER_WORDS = {1: "One", 2: "Two", 3: "Three", 4: "Four", 5: "Five", 6: "Six"}
ROMAN = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X"]


# ---------------------------------------------------------------------------
# Matrix files
# ---------------------------------------------------------------------------


def parse_matrix_file(path, mode="covariance") -> SymmetricMatrix:
    """Read a whitespace-separated matrix file.

    Blank lines and lines starting with ``#`` are ignored. An optional first
    line holding a single integer gives p. The body is either p full rows of
    p values or a lower triangle (rows of lengths 1, 2, ..., p), which is
    mirrored. A full matrix must be symmetric to within 1e-10 (absolute);
    the average of the two triangles is used.
    """
    try:
        with open(path) as f:
            lines = [ln.split() for ln in f if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise InvalidInput(f"{path}: {exc.strerror}") from None
    try:
        rows = [[float(t) for t in ln] for ln in lines]
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no matrix entries")
    p = None
    if len(rows[0]) == 1 and len(lines[0]) == 1 and lines[0][0].isdigit() and len(rows) > 1:
        p = int(lines[0][0])
        rows = rows[1:]
    n = len(rows)
    if p is not None and n != p:
        raise ParseError(f"{path}: header says p={p} but found {n} rows")
    lengths = [len(r) for r in rows]
    if lengths == list(range(1, n + 1)):
        a = np.zeros((n, n))
        for i, r in enumerate(rows):
            a[i, : i + 1] = r
        a = a + np.tril(a, -1).T
    elif all(m == n for m in lengths):
        a = np.array(rows)
        if np.abs(a - a.T).max() > SYMMETRY_TOL:
            raise InvalidInput(f"{path}: matrix is not symmetric (max |a_ij - a_ji| = {np.abs(a - a.T).max():.3g})")
        a = (a + a.T) / 2
    else:
        raise ParseError(f"{path}: ragged rows (lengths {lengths}); expected a full or lower-triangular matrix")
    return SymmetricMatrix(a, mode)


def write_matrix_file(path, matrix, header=True):
    """Write a full matrix with round-trip precision (``repr`` of each float)."""
    a = matrix.entries if isinstance(matrix, SymmetricMatrix) else np.asarray(matrix, dtype=float)
    with open(path, "w") as f:
        if header:
            f.write(f"{a.shape[0]}\n")
        for row in a:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Formatting
# ---------------------------------------------------------------------------


def fmt4(x) -> str:
    """Round half-even to 4 decimals and drop the leading zero: 0.66385 -> '.6638'."""
    d = Decimal(repr(float(x))).quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN)
    if d == 0:
        d = abs(d)
    s = f"{d:.4f}"
    if s.startswith("0."):
        s = s[1:]
    elif s.startswith("-0."):
        s = "-" + s[2:]
    return s


def cell(est, se=None) -> str:
    return fmt4(est) if se is None else f"{fmt4(est)}({fmt4(se)})"


def _title(method, k):
    word = NUMBER_WORDS.get(k, str(k))
    return f"Estimates and Standard Errors for {word}-Factor {METHOD_TITLES[method]} Factor Analysis"


def format_table(result) -> str:
    """Text table: variables in rows, unrotated (and rotated) factors, then uniquenesses."""
    lam = np.array(result["loadings"])
    se_lam = np.array(result["se_loadings"])
    psi = np.array(result["uniquenesses"])
    se_psi = np.array(result["se_uniquenesses"])
    p, k = lam.shape
    rot = result.get("rotated")
    width = 15
    groups = [("Unrotated Factor", lam, se_lam)]
    if rot is not None:
        groups.append(("Rotated Factor", np.array(rot["loadings"]), np.array(rot["se_loadings"])))
    lines = [_title(result["method"], k), ""]
    head1 = "Variable  " + "".join(name.ljust(width * k) for name, _, _ in groups) + "Uniqueness"
    head2 = " " * 10 + "".join(ROMAN[r].ljust(width) for _ in groups for r in range(k))
    lines += [head1, head2]
    for i in range(p):
        cells = [cell(m[i, r], s[i, r]).ljust(width) for _, m, s in groups for r in range(k)]
        lines.append(f"X{i + 1}".ljust(10) + "".join(cells) + cell(psi[i], se_psi[i]))
    if result.get("tau") is not None:
        lines += ["", f"tau = {cell(result['tau'], result['se_tau'])}"]
    return "\n".join(lines)


def format_simulation(rep) -> str:
    """Text layout of empirical versus theoretical standard errors of the uniquenesses."""
    lines = [
        f"Empirical and Theoretical Standard Errors of Uniquenesses "
        f"({rep['method']}, k={rep['k']}, n={rep['n']}, seed={rep['seed']})",
        "",
        "Variable  " + f"m={rep['m']}".ljust(12) + "Theoretical S.E.",
    ]
    for i, (e, t) in enumerate(zip(rep["empirical_se_uniq"], rep["theoretical_se_uniq"])):
        lines.append(f"X{i + 1}".ljust(10) + f"{e:.7f}".lstrip("0").ljust(12) + f"{t:.7f}".lstrip("0"))
    lines.append(f"failed replicates: {rep['failures']}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    input: str
    mode: str = "correlation"
    method: str = "least_square"
    k: int = 1
    n: Optional[float] = None
    rotate: bool = False
    normalize: bool = False
    simulate: List[int] = field(default_factory=list)
    seed: int = 0
    format: str = "text"
    acov_file: Optional[str] = None
    emit_acov: bool = False
    workers: Optional[int] = None

    def validate(self):
        if self.k < 1:
            raise InvalidInput(f"k must be >= 1, got {self.k}")
        if self.method not in extraction.METHODS:
            raise InvalidInput(f"unknown method {self.method!r}")
        if self.n is None and self.acov_file is None:
            raise InvalidInput("a sample size -n is required unless --acov-file is given")
        if self.simulate and self.n is None:
            raise InvalidInput("--simulate needs a sample size -n")
        if any(m < 2 for m in self.simulate):
            raise InvalidInput("--simulate needs at least 2 replicates")


def _tolist(a):
    return np.asarray(a).tolist()


def analyse(config: RunConfig) -> dict:
    """Fit, compute standard errors, optionally rotate and simulate; return a JSON-ready dict."""
    config.validate()
    sigma = parse_matrix_file(config.input, config.mode)
    sol = extraction.fit(sigma, config.k, config.method)
    if config.acov_file is not None:
        acov = load_external_acov(config.acov_file, n=config.n)
    elif config.mode == "correlation":
        acov = acov_sample_correlations(sigma, config.n)
    else:
        acov = acov_sample_covariances(sigma, config.n)
    system = loading_jacobian(sigma, sol)
    se = assemble_se(sigma, sol, acov, system)
    result = {
        "method": sol.method,
        "mode": config.mode,
        "p": sol.p,
        "k": sol.k,
        "n": config.n,
        "iterations": sol.iterations,
        "loadings": _tolist(sol.loadings),
        "uniquenesses": _tolist(sol.uniquenesses),
        "eigenvalues": _tolist(sol.eigenvalues),
        "communalities": _tolist(sol.communalities),
        "tau": sol.tau,
        "se_loadings": _tolist(se.se_loadings),
        "se_uniquenesses": _tolist(se.se_uniq),
        "se_tau": se.se_tau,
    }
    if config.emit_acov:
        result["acov_loadings"] = _tolist(se.acov_loadings)
        result["acov_uniquenesses"] = _tolist(se.acov_uniq)
        if se.acov_tau is not None:
            result["acov_tau"] = se.acov_tau
    if config.rotate:
        rot, cov_rot = rotated_se(sigma, sol, system.M, acov, normalize=config.normalize)
        result["rotated"] = {
            "normalized": config.normalize,
            "loadings": _tolist(rot.rotated),
            "rotation": _tolist(rot.rotation),
            "criterion": rot.criterion,
            "se_loadings": _tolist(rot.se),
        }
        if config.emit_acov:
            result["rotated"]["acov_loadings"] = _tolist(cov_rot)
    if config.simulate:
        result["simulations"] = [
            json.loads(
                run_simulation(sigma, config.n, config.k, config.method, m, config.seed, config.workers).to_json()
            )
            for m in config.simulate
        ]
    return result


def run(config: RunConfig, out=None, err=None) -> int:
    """Run one configuration, writing the report to ``out``; returns the exit code."""
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    try:
        result = analyse(config)
    except FactorAcovError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=err)
        return 2
    if config.format == "json":
        json.dump(result, out, indent=2)
        out.write("\n")
    else:
        out.write(format_table(result) + "\n")
        for rep in result.get("simulations", []):
            out.write("\n" + format_simulation(rep) + "\n")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="factor-acov",
        description="Factor analysis estimates with delta-method asymptotic standard errors.",
    )
    ap.add_argument("--input", "-i", required=True, help="matrix file (full or lower triangle)")
    ap.add_argument("--mode", choices=("covariance", "correlation"), default="correlation")
    ap.add_argument("--method", choices=extraction.METHODS, default="least_square")
    ap.add_argument("-k", type=int, default=1, help="number of factors")
    ap.add_argument("-n", type=float, default=None, help="sample size")
    ap.add_argument("--rotate", action="store_true", help="varimax-rotate and report rotated SEs")
    ap.add_argument("--normalize", action="store_true", help="Kaiser-normalized varimax")
    ap.add_argument("--simulate", type=int, nargs="+", default=[], metavar="M",
                    help="run Wishart simulation studies with M replicates each")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None, help="processes for --simulate")
    ap.add_argument("--format", choices=("text", "json"), default="text")
    ap.add_argument("--acov-file", default=None, help="externally estimated acov of the matrix entries")
    ap.add_argument("--emit-acov", action="store_true", help="include acov matrices in JSON output")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    n = args.n
    if n is not None and float(n).is_integer():
        n = int(n)
    config = RunConfig(
        input=args.input,
        mode=args.mode,
        method=args.method,
        k=args.k,
        n=n,
        rotate=args.rotate,
        normalize=args.normalize,
        simulate=args.simulate,
        seed=args.seed,
        format=args.format,
        acov_file=args.acov_file,
        emit_acov=args.emit_acov,
        workers=args.workers,
    )
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
