"""Command-line harness: generate workloads, run kernels on simulated
grids, query the cost model, and emit benchmark tables.

Exit codes: 0 success (and verification passed), 1 usage error,
2 verification failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys

import numpy as np

from . import costmodel, mmio
from .algorithms import (
    FusionStrategy,
    IncompatibleStrategyError,
    comm_breakdown,
    run_fusedmm,
    run_kernel,
)
from .kernels import FUSED_MODES, KernelMode
from .kernels import fusedmm_a, fusedmm_b, sddmm, spmm_a, spmm_b
from .layout import AlgorithmId, make_grid
from .mmio import MatrixMarketError
from .sparse import SparseMatrix, erdos_renyi, transpose

_MODES = {
    "sddmm": KernelMode.SDDMM,
    "spmm-a": KernelMode.SPMM_A,
    "spmm-b": KernelMode.SPMM_B,
    "fusedmm-a": KernelMode.FUSEDMM_A,
    "fusedmm-b": KernelMode.FUSEDMM_B,
}
_STRATEGIES = {s.value: s for s in FusionStrategy}

CSV_COLUMNS = (
    "preset,p,c,alg,strategy,mode,predicted_words,measured_words,"
    "propagation_words,replication_words,messages,verify"
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _dump_json(payload: dict, path: str | None) -> None:
    payload = {"schema": 1, "generated_at": _timestamp(), **payload}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _fmt_num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def _build_parser() -> _Parser:
    top = _Parser(prog="distmm", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a random sparse matrix")
    gen.add_argument("--rows", type=int, required=True)
    gen.add_argument("--cols", type=int, default=None, help="default: square")
    gen.add_argument("--nnz-per-row", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--output", required=True)

    run = sub.add_parser("run", help="run one kernel on a simulated grid")
    run.add_argument("--matrix", help="Matrix Market input; omit to generate")
    run.add_argument("--rows", type=int, default=4096)
    run.add_argument("--cols", type=int, default=None)
    run.add_argument("--nnz-per-row", type=int, default=32)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--alg", required=True, choices=[a.value for a in AlgorithmId])
    run.add_argument("--mode", default="fusedmm-a", choices=sorted(_MODES))
    run.add_argument("--strategy", default="none", choices=sorted(_STRATEGIES))
    run.add_argument("--p", type=int, required=True)
    run.add_argument("--c", default="1", help="replication factor, or 'auto'")
    run.add_argument("--r", type=int, default=128)
    run.add_argument("--reps", type=int, default=1)
    run.add_argument("--executor", default="threaded", choices=("threaded", "sequential"))
    run.add_argument("--no-verify", action="store_true")
    run.add_argument("-o", "--output", help="write the JSON report here")
    run.add_argument("--csv", help="also write per-rank counters as CSV")

    pre = sub.add_parser("predict", help="model cost of one fused run")
    pre.add_argument("--alg", required=True, choices=[a.value for a in AlgorithmId])
    pre.add_argument("--strategy", default="none", choices=sorted(_STRATEGIES))
    pre.add_argument("--p", type=int, required=True)
    pre.add_argument("--c", default="auto")
    pre.add_argument("--n", type=int, required=True)
    pre.add_argument("--r", type=int, required=True)
    pre.add_argument("--nnz", type=float, default=None)
    pre.add_argument("--phi", type=float, default=None)
    pre.add_argument("-o", "--output")

    sel = sub.add_parser("select", help="rank algorithms for a problem")
    sel.add_argument("--p", type=int, required=True)
    sel.add_argument("--n", type=int, required=True)
    sel.add_argument("--r", type=int, required=True)
    sel.add_argument("--nnz", type=float, default=None)
    sel.add_argument("--phi", type=float, default=None)
    sel.add_argument("-o", "--output")

    ben = sub.add_parser("bench", help="run a preset experiment sweep")
    ben.add_argument("preset", choices=("weak1", "weak2", "sweep-phi"))
    ben.add_argument("-o", "--output", required=True, help="CSV path")
    ben.add_argument("--mem-budget-gb", type=float, default=1.0)
    ben.add_argument("--max-c", type=int, default=16)
    ben.add_argument("--verify", action="store_true")
    return top


def _generate(rows: int, cols: int | None, nnz_per_row: int, seed: int) -> SparseMatrix:
    cols = rows if cols is None else cols
    if rows <= 0 or cols <= 0 or nnz_per_row <= 0:
        raise _UsageError("matrix sizes must be positive")
    if nnz_per_row > cols:
        raise _UsageError(f"nnz-per-row {nnz_per_row} exceeds cols {cols}")
    return erdos_renyi(rows, cols, nnz_per_row, seed=seed)


def cmd_gen(args) -> int:
    s = _generate(args.rows, args.cols, args.nnz_per_row, args.seed)
    mmio.write_matrix_market(
        args.output, s, comment=f"seeded random matrix, seed={args.seed}"
    )
    print(f"wrote {s.n_rows}x{s.n_cols}, {s.nnz} entries -> {args.output}")
    return 0


def _serial_reference(mode: KernelMode, s, a, b):
    if mode is KernelMode.SDDMM:
        return sddmm(s, a, b)
    if mode is KernelMode.SPMM_A:
        return spmm_a(s, b)
    if mode is KernelMode.SPMM_B:
        return spmm_b(s, a)
    if mode is KernelMode.FUSEDMM_A:
        return fusedmm_a(s, a, b)
    return fusedmm_b(s, a, b)


def _errors(out, ref):
    if isinstance(ref, SparseMatrix):
        got, want = out.vals, ref.vals
    else:
        got, want = np.asarray(out), np.asarray(ref)
    diff = np.abs(got - want)
    max_abs = float(diff.max()) if diff.size else 0.0
    denom = np.maximum(np.abs(want), 1e-12)
    max_rel = float((diff / denom).max()) if diff.size else 0.0
    ok = np.allclose(got, want, rtol=1e-10, atol=1e-12)
    return ok, max_rel, max_abs


def _resolve_c(args, alg: AlgorithmId, strategy, n: int, r: int, nnz: float) -> int:
    if str(args.c) != "auto":
        try:
            return int(args.c)
        except ValueError:
            raise _UsageError(f"--c must be an integer or 'auto', got {args.c!r}")
    if strategy is None:
        strategy = FusionStrategy.NO_ELISION
    rep = costmodel.optimal_c(alg, strategy, args.p, n, r, nnz)
    return rep.query.c


def _dispatch_run(alg, mode, strategy, s, s_t, a, b, grid, executor):
    if mode in FUSED_MODES:
        return run_fusedmm(
            alg, strategy, mode, s, a, b, grid, s_t=s_t, pad=True, executor=executor
        )
    return run_kernel(alg, mode, s, a, b, grid, pad=True, executor=executor)


def cmd_run(args) -> int:
    alg = AlgorithmId(args.alg)
    mode = _MODES[args.mode]
    strategy = _STRATEGIES[args.strategy]
    if args.matrix:
        s = mmio.read_matrix_market(args.matrix)
        source = args.matrix
    else:
        s = _generate(args.rows, args.cols, args.nnz_per_row, args.seed)
        source = f"generated(seed={args.seed})"
    m, n = s.shape
    r = args.r
    c = _resolve_c(args, alg, strategy if mode in FUSED_MODES else None, n, r, s.nnz)
    grid = make_grid(alg, args.p, c)

    rng = np.random.default_rng(args.seed + 1)
    a = rng.standard_normal((m, r))
    b = rng.standard_normal((n, r))
    s_t = transpose(s)

    result = _dispatch_run(alg, mode, strategy, s, s_t, a, b, grid, args.executor)
    identical = True
    for _ in range(args.reps - 1):
        again = _dispatch_run(alg, mode, strategy, s, s_t, a, b, grid, args.executor)
        same_out = (
            np.array_equal(again.output.vals, result.output.vals)
            if isinstance(result.output, SparseMatrix)
            else np.array_equal(again.output, result.output)
        )
        same_stats = [st.to_dict() for st in again.stats] == [
            st.to_dict() for st in result.stats
        ]
        identical = identical and same_out and same_stats
    if not identical:
        raise RuntimeError("repeated runs diverged; simulation is not deterministic")

    verdict = None
    max_rel = max_abs = None
    if not args.no_verify:
        ref = _serial_reference(mode, s, a, b)
        ok, max_rel, max_abs = _errors(result.output, ref)
        verdict = "PASS" if ok else "FAIL"

    breakdown = comm_breakdown(result.stats)
    predicted = None
    delta = None
    if mode in FUSED_MODES:
        rep = costmodel.predict(alg, strategy, args.p, c, n, r, nnz=s.nnz)
        predicted = {
            "words": rep.words,
            "words_dense": rep.words_dense,
            "words_sparse": rep.words_sparse,
            "messages": rep.messages,
        }
        delta = breakdown["max_rank_cost"] - rep.words

    report = {
        "experiment": {
            "source": source,
            "alg": alg.value,
            "mode": args.mode,
            "strategy": args.strategy,
            "p": args.p,
            "c": c,
            "m": m,
            "n": n,
            "r": r,
            "nnz": s.nnz,
            "seed": args.seed,
            "repetitions": args.reps,
            "executor": args.executor,
        },
        "verify": {
            "enabled": not args.no_verify,
            "verdict": verdict,
            "max_rel_error": max_rel,
            "max_abs_error": max_abs,
        },
        "comm": breakdown,
        "predicted": predicted,
        "delta_words": delta,
        "bit_identical": identical,
        "per_rank": [st.to_dict() for st in result.stats],
    }
    _dump_json(report, args.output)
    if args.csv:
        _write_rank_csv(args.csv, result.stats)
    return 2 if verdict == "FAIL" else 0


def _write_rank_csv(path: str, stats) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["rank", "category", "payload", "words_sent", "words_received", "messages"]
        )
        for rank, st in enumerate(stats):
            for key in sorted(st.words_sent):
                cat, pay = key
                w.writerow(
                    [
                        rank,
                        cat,
                        pay,
                        st.words_sent[key],
                        st.words_received[key],
                        st.messages_sent[key],
                    ]
                )


def _report_dict(rep: costmodel.CostReport) -> dict:
    q = rep.query
    return {
        "alg": q.alg.value,
        "strategy": q.strategy.value,
        "p": q.p,
        "c": q.c,
        "n": q.n,
        "r": q.r,
        "nnz": q.nnz,
        "phi": q.phi,
        "words": rep.words,
        "words_dense": rep.words_dense,
        "words_sparse": rep.words_sparse,
        "messages": rep.messages,
        "local_s": list(rep.local_s),
        "local_b": list(rep.local_b),
    }


def _need_sparsity(args, alg: AlgorithmId | None) -> float:
    if args.nnz is not None:
        return float(args.nnz)
    if args.phi is not None:
        return float(args.phi) * args.n * args.r
    if alg is AlgorithmId.D15_DENSE_SHIFT:
        return 0.0
    raise _UsageError("this query needs --nnz or --phi")


def cmd_predict(args) -> int:
    alg = AlgorithmId(args.alg)
    strategy = _STRATEGIES[args.strategy]
    nnz = _need_sparsity(args, alg)
    if str(args.c) == "auto":
        rep = costmodel.optimal_c(alg, strategy, args.p, args.n, args.r, nnz)
    else:
        try:
            c = int(args.c)
        except ValueError:
            raise _UsageError(f"--c must be an integer or 'auto', got {args.c!r}")
        rep = costmodel.predict(alg, strategy, args.p, c, args.n, args.r, nnz=nnz)
    out = _report_dict(rep)
    try:
        out["c_continuous"] = costmodel.optimal_c_continuous(
            alg, strategy, args.p, phi=rep.query.phi or None
        )
    except ValueError:
        out["c_continuous"] = None
    _dump_json({"predict": out}, args.output)
    return 0


def cmd_select(args) -> int:
    nnz = _need_sparsity(args, None)
    ranked = costmodel.select_algorithm(args.p, args.n, args.r, nnz)
    _dump_json({"select": [_report_dict(rep) for rep in ranked]}, args.output)
    return 0


def _estimate_bytes(n: int, r: int, nnz: float, c: int) -> float:
    # global operands, per-rank partitions, and replicated buffers
    return 8.0 * (2 * n * r * (2.0 + c) + 15.0 * nnz)


def _bench_combos():
    strategies = {
        AlgorithmId.D15_DENSE_SHIFT: (
            FusionStrategy.NO_ELISION,
            FusionStrategy.REPLICATION_REUSE,
            FusionStrategy.LOCAL_KERNEL_FUSION,
        ),
        AlgorithmId.D15_SPARSE_SHIFT: (
            FusionStrategy.NO_ELISION,
            FusionStrategy.REPLICATION_REUSE,
        ),
        AlgorithmId.D25_DENSE_REPL: (
            FusionStrategy.NO_ELISION,
            FusionStrategy.REPLICATION_REUSE,
        ),
        AlgorithmId.D25_SPARSE_REPL: (FusionStrategy.NO_ELISION,),
    }
    for alg, strats in strategies.items():
        for strategy in strats:
            yield alg, strategy


def _bench_measure(alg, strategy, s, r, p, c, budget_gb, verify):
    est = _estimate_bytes(s.n_cols, r, s.nnz, c)
    if est > budget_gb * 1e9:
        return None, "predict-only"
    rng = np.random.default_rng(7)
    a = rng.standard_normal((s.n_rows, r))
    b = rng.standard_normal((s.n_cols, r))
    grid = make_grid(alg, p, c)
    result = run_fusedmm(
        alg, strategy, KernelMode.FUSEDMM_A, s, a, b, grid,
        s_t=transpose(s), pad=True,
    )
    note = "skipped"
    if verify:
        ok, _, _ = _errors(result.output, fusedmm_a(s, a, b))
        note = "pass" if ok else "fail"
    return comm_breakdown(result.stats), note


def _bench_rows(preset: str, args):
    if preset == "weak1":
        cases = [(p, 65536 * p, 32, 256) for p in (1, 2, 4)]
    else:
        cases = [
            (p, 16384 * 2 ** k, 8 * 2 ** k, 256)
            for k, p in enumerate((1, 4, 16))
        ]
    for p, side, nnz_row, r in cases:
        s = erdos_renyi(side, side, nnz_row, seed=100 + p)
        for alg, strategy in _bench_combos():
            for c in costmodel.valid_c_values(alg, p):
                if c > args.max_c:
                    continue
                rep = costmodel.predict(alg, strategy, p, c, side, r, nnz=s.nnz)
                measured, note = _bench_measure(
                    alg, strategy, s, r, p, c, args.mem_budget_gb, args.verify
                )
                yield _bench_row(preset, p, c, rep, measured, note)


def _bench_row(preset, p, c, rep, measured, note) -> list:
    if measured is None:
        meas = prop = repl = msgs = None
    else:
        meas = measured["max_rank_cost"]
        prop = measured["propagation_words"]
        repl = measured["replication_words"]
        msgs = measured["messages"]
    return [
        preset,
        p,
        c,
        rep.query.alg.value,
        rep.query.strategy.value,
        "fusedmm-a",
        _fmt_num(rep.words),
        _fmt_num(meas),
        _fmt_num(prop),
        _fmt_num(repl),
        _fmt_num(msgs if msgs is not None else None),
        note,
    ]


def _sweep_phi_rows(args):
    p, n = 256, 65536
    for r in (32, 64, 128, 256):
        for nnz_row in (1, 2, 4, 8, 16, 32, 64, 128):
            ranked = costmodel.select_algorithm(p, n, r, float(n) * nnz_row)
            best = ranked[0]
            yield _bench_row("sweep-phi", p, best.query.c, best, None, "predict-only")


def cmd_bench(args) -> int:
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS.split(","))
        if args.preset == "sweep-phi":
            rows = _sweep_phi_rows(args)
        else:
            rows = _bench_rows(args.preset, args)
        count = 0
        for row in rows:
            w.writerow(row)
            count += 1
    print(f"wrote {count} rows -> {args.output}")
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "run": cmd_run,
    "predict": cmd_predict,
    "select": cmd_select,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except IncompatibleStrategyError as exc:
        print(f"incompatible strategy: {exc}", file=sys.stderr)
        return 1
    except (MatrixMarketError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except RuntimeError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
