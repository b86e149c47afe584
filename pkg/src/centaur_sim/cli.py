"""Command-line entry point: ``centaur-sim <command> [flags]``.

Every command prints its resolved configuration first (in config-file
format) and writes its outputs under ``--out``. Failures print a single
``error code=<code> message=<text>`` line to stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


from . import evalharness as eh
from . import plotting
from .config import RunConfig, resolve
from .deploy import DeploymentConfig
from .errors import MissingPathError, SimError
from .geometry import generate_vocabulary, load_vocabulary, save_vocabulary
from .scorer import ScoringPlanner, build_dataset, load_checkpoint, save_checkpoint, train
from .uncertainty import prepare_candidates, report_for_planner_scores, write_uncertainty_csv
from .worldsim import generate_stream, load_scenes, save_scenes


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        code = "unknown-flag" if "unrecognized arguments" in message else "usage"
        raise CliError(code, message)


# flag name -> (type, help); every flag defaults to None so the config file can fill it
_FLAGS = {
    "seed": (int, "global seed (default: $CENTAUR_SIM_SEED or 0)"),
    "out": (str, "output directory, or output file for gen-scenes/gen-vocab/train"),
    "jobs": (int, "worker threads; never changes results"),
    "vocab": (str, "vocabulary file (default: generate from --k and --vocab-seed)"),
    "checkpoint": (str, "checkpoint file"),
    "scenes": (str, "scene file (default: generate --n frames from --seed)"),
    "k": (int, "vocabulary size"),
    "speed_levels": (int, "speed grid size"),
    "curvature_levels": (int, "curvature grid size (odd)"),
    "vocab_seed": (int, "seed for vocabulary generation"),
    "n": (int, "number of frames / scenes"),
    "categories": (str, "category mix, e.g. RDBT,YLD or RDBT:2,NONE:1"),
    "density": (float, "extra obstacle density"),
    "clip_length": (int, "frames per clip in generated streams"),
    "epochs": (int, "training epochs"),
    "lr": (float, "training learning rate"),
    "imitation_weight": (float, "weight of the imitation loss"),
    "strategy": (str, "none | ttt | ttt_gated | fallback"),
    "measure": (str, "cluster | full | semantic | kl"),
    "eta": (float, "TTT learning rate"),
    "buffer": (int, "gradient buffer size"),
    "threshold": (float, "gate / fallback threshold"),
    "thresholds": (str, "comma-separated sweep thresholds"),
    "fallback_size": (int, "number of fallback trajectories"),
    "persistent": (str, "true: parameters drift along the stream; false: reset per frame"),
    "M": (int, "number of sampled candidates"),
    "tau": (float, "semantic clustering radius"),
    "candidate_seed": (int, "seed for candidate sampling"),
    "frames": (str, "comma-separated frame indices to plot"),
}

_COMMAND_FLAGS = {
    "gen-scenes": ("n", "categories", "density", "clip_length"),
    "gen-vocab": ("k", "speed_levels", "curvature_levels", "vocab_seed"),
    "train": ("vocab", "scenes", "k", "vocab_seed", "n", "categories", "density", "epochs", "lr", "imitation_weight"),
    "eval": ("vocab", "checkpoint", "scenes", "k", "vocab_seed", "n", "categories", "density", "clip_length",
             "strategy", "measure", "eta", "buffer", "threshold", "fallback_size", "persistent", "M", "tau",
             "candidate_seed"),
    "failure-id": ("vocab", "checkpoint", "scenes", "k", "vocab_seed", "n", "categories", "density",
                   "clip_length", "measure", "thresholds", "M", "tau", "candidate_seed"),
    "plot": ("vocab", "checkpoint", "scenes", "k", "vocab_seed", "n", "categories", "density", "clip_length",
             "M", "candidate_seed", "frames"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="centaur-sim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, flags in _COMMAND_FLAGS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        for flag in ("seed", "out", "jobs") + flags:
            typ, help_ = _FLAGS[flag]
            p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None, help=help_)
    return parser


# ---------------------------------------------------------------------------
# shared helpers


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingPathError(f"{what} not found: {p}")
    return p


def _vocab(cfg: RunConfig):
    if cfg.vocab:
        return load_vocabulary(_require(cfg.vocab, "vocabulary"))
    return generate_vocabulary(cfg.k, cfg.speed_levels, cfg.curvature_levels, cfg.vocab_seed)


def _stream(cfg: RunConfig, clip_length: int | None = None):
    if cfg.scenes:
        return load_scenes(_require(cfg.scenes, "scene file"))
    return generate_stream(cfg.n, cfg.category_mix(), cfg.seed, cfg.density,
                           cfg.clip_length if clip_length is None else clip_length)


def _planner(cfg: RunConfig) -> ScoringPlanner:
    if not cfg.checkpoint:
        raise MissingPathError("--checkpoint is required")
    ck = load_checkpoint(_require(cfg.checkpoint, "checkpoint"))
    return ScoringPlanner(_vocab(cfg), ck.decoder, ck.encoder, ck.trajectory_weights)


def _deploy_config(cfg: RunConfig, strategy: str | None = None) -> DeploymentConfig:
    return DeploymentConfig(
        strategy=strategy or cfg.strategy, eta=cfg.eta, measure=cfg.measure, threshold=cfg.threshold,
        fallback_size=cfg.fallback_size, buffer=cfg.buffer, persistent=cfg.persistent, M=cfg.M, tau=cfg.tau,
        candidate_seed=cfg.candidate_seed,
    )


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _out_file(cfg: RunConfig, default_name: str) -> Path:
    out = Path(cfg.out)
    if out.suffix == "":
        out.mkdir(parents=True, exist_ok=True)
        return out / default_name
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_gen_scenes(cfg: RunConfig) -> list[Path]:
    path = _out_file(cfg, "scenes.jsonl")
    save_scenes(generate_stream(cfg.n, cfg.category_mix(), cfg.seed, cfg.density, cfg.clip_length), path)
    return [path]


def cmd_gen_vocab(cfg: RunConfig) -> list[Path]:
    path = _out_file(cfg, "vocab.txt")
    save_vocabulary(generate_vocabulary(cfg.k, cfg.speed_levels, cfg.curvature_levels, cfg.vocab_seed), path)
    return [path]


def cmd_train(cfg: RunConfig) -> list[Path]:
    vocab = _vocab(cfg)
    dataset = build_dataset(_stream(cfg, clip_length=1), vocab, cfg.jobs)
    history = []
    params = train(dataset, cfg.epochs, cfg.lr, cfg.seed, history=history, imitation_weight=cfg.imitation_weight)
    path = _out_file(cfg, "checkpoint.txt")
    save_checkpoint(path, params, cfg.seed, trajectory_weights=dataset.mean_pdms())
    print(f"# training loss {history[0]:.6f} -> {history[-1]:.6f}")
    return [path]


def cmd_eval(cfg: RunConfig) -> list[Path]:
    planner = _planner(cfg)
    stream = _stream(cfg)
    result = eh.evaluate(stream, planner, _deploy_config(cfg), jobs=cfg.jobs)
    out = _out_dir(cfg)
    paths = [
        eh.emit_report(result, out / "records.csv", "csv"),
        eh.emit_report(result, out / "report.json", "json"),
        eh.emit_report(result, out / "report.md", "markdown"),
    ]
    cats = eh.category_report(result)
    (out / "categories.md").write_text(cats.to_markdown(result.strategy))
    paths.append(out / "categories.md")
    paths.append(plotting.plot_category_bars(cats.pdms, out / "categories.png"))
    sys.stdout.write((out / "report.md").read_text())
    return paths


def cmd_failure_id(cfg: RunConfig) -> list[Path]:
    planner = _planner(cfg)
    stream = _stream(cfg)
    dcfg = _deploy_config(cfg, strategy="none")
    tables = eh.expert_tables(stream, planner.vocab, cfg.jobs)
    result = eh.evaluate(stream, planner, dcfg, jobs=cfg.jobs, tables=tables)
    sweep = eh.sweep_thresholds(result.records, cfg.threshold_list())
    out = _out_dir(cfg)
    eh.write_failure_csv(sweep, out / "failure.csv")
    md = eh.failure_markdown(sweep, cfg.measure)
    (out / "failure.md").write_text(md)
    cands = prepare_candidates(planner.vocab, planner.trajectory_weights, cfg.M, cfg.candidate_seed)
    rows = [(s.frame_index, report_for_planner_scores(planner.score(s).scores, cfg.measure, cands, cfg.tau))
            for s in stream]
    write_uncertainty_csv(rows, out / "uncertainty.csv")
    sys.stdout.write(md)
    return [out / "failure.csv", out / "failure.md", out / "uncertainty.csv",
            plotting.plot_threshold_sweep(sweep, out / "threshold_sweep.png")]


def cmd_plot(cfg: RunConfig) -> list[Path]:
    planner = _planner(cfg)
    stream = {s.frame_index: s for s in _stream(cfg)}
    cands = prepare_candidates(planner.vocab, planner.trajectory_weights, cfg.M, cfg.candidate_seed)
    out = _out_dir(cfg)
    paths = []
    for f in cfg.frame_list():
        if f not in stream:
            raise MissingPathError(f"frame {f} is not in the stream")
        rep = report_for_planner_scores(planner.score(stream[f]).scores, "cluster", cands)
        final = rep.diagnostics["final_scores"]
        title = f"frame {f} ({stream[f].category}), cluster entropy {rep.value:.3f}"
        paths.append(plotting.plot_score_distribution(cands.trajectories, final, cands.assignment.labels,
                                                      out / f"scores_frame{f:05d}.png", title))
    return paths


COMMANDS = {
    "gen-scenes": cmd_gen_scenes,
    "gen-vocab": cmd_gen_vocab,
    "train": cmd_train,
    "eval": cmd_eval,
    "failure-id": cmd_failure_id,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        cfg = resolve(args.config, overrides)
        sys.stdout.write(cfg.to_text())
        for path in COMMANDS[args.command](cfg):
            print(f"# wrote {path}")
        return 0
    except CliError as exc:
        _fail(exc.code, str(exc))
    except SimError as exc:
        _fail(exc.code, str(exc))
    except (OSError, ValueError) as exc:
        _fail("io-error" if isinstance(exc, OSError) else "invalid-parameter", str(exc))
    return 2


def _fail(code: str, message: str) -> None:
    print(f"error code={code} message={' '.join(message.split())}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
