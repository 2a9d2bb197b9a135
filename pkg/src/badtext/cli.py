"""Command-line surface: baseline, attack, defend, cycle, report.

One JSON config file drives every phase; flags override individual fields
and ``BADTEXT_CONFIG`` supplies the config path when ``--config`` is
absent. Every emitted report embeds a digest of the effective config so
any number in any file is traceable to the exact settings that produced
it. Relative paths inside the config resolve against the config file's
directory.

Exit codes: 0 success, 1 partial results (budget ran out), 2 error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .corpus import DEFAULT_TEXT_COLUMN, SamplePlan, load_dataset, sample_category
from .defense import (
    Aggregation,
    Dictionary,
    default_reversal_map,
    defend_attack_report,
    invert_rules,
)
from .errors import BadTextError, BudgetExhausted, ConfigError
from .harness import AttackReport, run_attack, run_baseline
from .perturb import (
    RuleMode,
    RuleSet,
    Strategy,
    default_duplication_rules,
    default_substitution_rules,
    load_rules,
)
from .ratelimit import BudgetLedger, RateLimit
from .scorer import (
    BudgetedScorer,
    HttpAdapterConfig,
    HttpScorer,
    LexiconModel,
    LexiconScorer,
    PolarityThresholds,
    ReplayScorer,
)

CONFIG_ENV_VAR = "BADTEXT_CONFIG"

PHASES = ("build", "attack", "defend")

#: Flat CSV columns, one row per attack outcome.
ATTACK_CSV_COLUMNS = (
    "sample_id",
    "variant_text",
    "strategy",
    "rule_key",
    "offset",
    "baseline_score",
    "attacked_score",
    "delta",
    "flipped",
)

BUILD_CSV_COLUMNS = ("sample_id", "kind", "score", "polarity")

DEFEND_CSV_COLUMNS = (
    "sample_id",
    "variant_text",
    "attack_detected",
    "suspects",
    "chosen_candidate",
    "baseline_class",
    "defended_class",
    "restored",
)


@dataclass
class Config:
    """Validated, effective configuration plus the dict it hashed to."""

    raw: dict
    base_dir: Path
    digest: str

    def _resolve(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    # --- sections ---------------------------------------------------------

    @property
    def dataset_path(self) -> Path:
        return self._resolve(self.raw["dataset"]["path"])

    @property
    def text_column(self) -> str:
        return self.raw["dataset"].get("text_column", DEFAULT_TEXT_COLUMN)

    def plan(self) -> SamplePlan:
        s = self.raw.get("sampling", {})
        return SamplePlan(
            category=s.get("category", "toxicity"),
            threshold=s.get("threshold", 0.5),
            count=s.get("count", 100),
            seed=s.get("seed", 0),
            top=s.get("top", False),
        )

    def thresholds(self) -> PolarityThresholds:
        t = self.raw.get("thresholds", {})
        return PolarityThresholds(
            negative_min=t.get("negative_min", 0.6),
            positive_max=t.get("positive_max", 0.4),
        )

    def rules(self) -> RuleSet:
        attack = self.raw.get("attack", {})
        if attack.get("rules_path"):
            return load_rules(self._resolve(attack["rules_path"]))
        mode = RuleMode(attack.get("mode", "substitute"))
        if mode is RuleMode.SUBSTITUTE:
            return default_substitution_rules()
        return default_duplication_rules()

    def strategy(self) -> Strategy:
        return Strategy(
            self.raw.get("attack", {}).get("strategy", "single_position")
        )

    def ledger(self) -> BudgetLedger:
        budget = self.raw.get("budget", {})
        cap = budget.get("cap")
        path = budget.get("ledger_path")
        if path:
            return BudgetLedger.load(self._resolve(path), cap=cap)
        return BudgetLedger(cap)

    def build_scorer(self, ledger: BudgetLedger):
        section = self.raw["scorer"]
        if "lexicon" in section:
            opts = section["lexicon"]
            model = LexiconModel.load(
                self._resolve(opts["weights_path"]),
                bias=opts.get("bias", 0.0),
                primary_label=opts.get("primary_label", "toxicity"),
            )
            return BudgetedScorer(LexiconScorer(model), ledger)
        if "replay" in section:
            opts = section["replay"]
            scorer = ReplayScorer.from_file(
                self._resolve(opts["fixture_path"]),
                primary_label=opts.get("primary_label", "toxicity"),
            )
            return BudgetedScorer(scorer, ledger)
        opts = section["http"]
        adapter = HttpAdapterConfig(
            endpoint=opts["endpoint"],
            request_template=opts["request_template"],
            response_paths=opts["response_paths"],
            timeout=opts.get("timeout", 10.0),
            rate=RateLimit(
                qps=opts.get("qps", 1.0), daily_cap=opts.get("daily_cap")
            ),
            headers=opts.get("headers", {}),
        )
        return HttpScorer(
            adapter, ledger, primary_label=opts.get("primary_label", "toxicity")
        )

    def dictionary(self) -> Dictionary:
        d = self.raw.get("defense", {})
        if "dictionary_path" not in d:
            raise ConfigError("defense.dictionary_path is required for defend runs")
        allow = d.get("allowlist_path")
        return Dictionary.load(
            self._resolve(d["dictionary_path"]),
            self._resolve(allow) if allow else None,
        )

    def reversal_map(self) -> dict[str, str]:
        # The defense always knows the stock leetspeak reversals; configured
        # substitution rules extend them.
        reversal = default_reversal_map()
        rules = self.rules()
        if rules.mode is RuleMode.SUBSTITUTE:
            reversal.update(invert_rules(rules))
        return reversal

    def defense_options(self) -> dict:
        d = self.raw.get("defense", {})
        return {
            "aggregation": Aggregation(d.get("aggregation", "max")),
            "max_edit": d.get("max_edit", 1),
            "cap": d.get("cap", 8),
            "combo_cap": d.get("combo_cap", 64),
            "log_path": self._resolve(d["log_path"]) if d.get("log_path") else None,
        }

    @property
    def output_dir(self) -> Path:
        return self._resolve(self.raw.get("output", {}).get("directory", "reports"))

    @property
    def formats(self) -> list[str]:
        return list(self.raw.get("output", {}).get("formats", ["json"]))


def _config_digest(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


_OVERRIDE_FIELDS = (
    # (args attribute, config section, config key)
    ("dataset", "dataset", "path"),
    ("text_column", "dataset", "text_column"),
    ("category", "sampling", "category"),
    ("count", "sampling", "count"),
    ("seed", "sampling", "seed"),
    ("threshold", "sampling", "threshold"),
    ("top", "sampling", "top"),
    ("strategy", "attack", "strategy"),
    ("mode", "attack", "mode"),
    ("output", "output", "directory"),
)


def load_config(args: argparse.Namespace) -> Config:
    """Read, override, validate, and digest the configuration."""
    config_path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if not config_path:
        raise ConfigError(
            f"no config: pass --config or set {CONFIG_ENV_VAR}"
        )
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{config_path}: config must be a JSON object")

    for attr, section, key in _OVERRIDE_FIELDS:
        value = getattr(args, attr, None)
        if value is not None:
            raw.setdefault(section, {})[key] = value

    config = Config(raw=raw, base_dir=config_path.parent, digest=_config_digest(raw))
    _validate(config)
    return config


def _validate(config: Config) -> None:
    raw = config.raw
    if "dataset" not in raw or "path" not in raw["dataset"]:
        raise ConfigError("dataset.path is required")
    scorer = raw.get("scorer", {})
    backends = [k for k in ("lexicon", "http", "replay") if k in scorer]
    if len(backends) != 1:
        raise ConfigError(
            f"exactly one scorer backend required, found {backends or 'none'}"
        )

    must_exist = [config.dataset_path]
    if "lexicon" in scorer:
        must_exist.append(config._resolve(scorer["lexicon"]["weights_path"]))
    if "replay" in scorer:
        must_exist.append(config._resolve(scorer["replay"]["fixture_path"]))
    attack = raw.get("attack", {})
    if attack.get("rules_path"):
        must_exist.append(config._resolve(attack["rules_path"]))
    defense = raw.get("defense", {})
    for key in ("dictionary_path", "allowlist_path"):
        if defense.get(key):
            must_exist.append(config._resolve(defense[key]))
    for path in must_exist:
        if not path.exists():
            raise ConfigError(f"configured path does not exist: {path}")


# --- report envelopes and emission -------------------------------------------


@dataclass
class ReportEnvelope:
    phase: str  # build | attack | defend
    category: str
    config_digest: str
    payload: dict
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "config_digest": self.config_digest,
            "phase": self.phase,
            "category": self.category,
            "payload": self.payload,
        }


def _score_cell(score_dict: dict):
    if score_dict["kind"] == "polarity":
        return score_dict["class"]
    values = score_dict["values"]
    if len(values) == 1:
        return next(iter(values.values()))
    return json.dumps(values, sort_keys=True)


def _csv_rows(envelope: ReportEnvelope) -> tuple[tuple[str, ...], list[list]]:
    payload = envelope.payload
    if envelope.phase == "build":
        label = payload.get("primary_label", "toxicity")
        rows = []
        for entry in payload["per_sample"]:
            score = entry["score"]
            cell = (
                score["class"]
                if score["kind"] == "polarity"
                else score["values"].get(label, "")
            )
            rows.append([entry["sample_id"], score["kind"], cell, entry["polarity"]])
        return BUILD_CSV_COLUMNS, rows
    if envelope.phase == "attack":
        label = payload.get("primary_label", "toxicity")
        rows = []
        for outcome in payload["outcomes"]:
            variant = outcome["variant"]
            base = outcome["baseline"]
            attacked = outcome["attacked"]
            rows.append(
                [
                    variant["sample_id"],
                    variant["text"],
                    variant["strategy"],
                    variant["rule_key"],
                    variant["offset"] if variant["offset"] is not None else "",
                    _score_cell(base) if base["kind"] == "polarity"
                    else base["values"].get(label, ""),
                    _score_cell(attacked) if attacked["kind"] == "polarity"
                    else attacked["values"].get(label, ""),
                    outcome["delta"] if outcome["delta"] is not None else "",
                    outcome["flipped"],
                ]
            )
        return ATTACK_CSV_COLUMNS, rows
    rows = [
        [
            entry["sample_id"],
            entry["variant_text"],
            entry["attack_detected"],
            "|".join(entry["suspects"]),
            entry["chosen_candidate"],
            entry["baseline_class"],
            entry["defended_class"],
            entry["restored"],
        ]
        for entry in payload["entries"]
    ]
    return DEFEND_CSV_COLUMNS, rows


def emit_report(
    envelope: ReportEnvelope, directory: str | Path, formats: Sequence[str]
) -> list[Path]:
    """Write the envelope as pretty, key-sorted JSON and/or flat CSV.

    Rerunning with the same inputs produces byte-identical files apart
    from timestamp fields. Filenames are
    ``{phase}-{category}-{config_digest}.{ext}``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{envelope.phase}-{envelope.category}-{envelope.config_digest}"
    written: list[Path] = []
    for fmt in formats:
        if fmt == "json":
            path = directory / f"{stem}.json"
            path.write_text(
                json.dumps(
                    envelope.to_dict(), indent=2, sort_keys=True, ensure_ascii=False
                )
                + "\n",
                encoding="utf-8",
            )
        elif fmt == "csv":
            path = directory / f"{stem}.csv"
            columns, rows = _csv_rows(envelope)
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(columns)
                writer.writerows(rows)
        else:
            raise ConfigError(f"unknown output format {fmt!r}")
        written.append(path)
    return written


# --- subcommands ---------------------------------------------------------------


def _load_samples(config: Config):
    samples = load_dataset(config.dataset_path, text_column=config.text_column)
    draw = sample_category(samples, config.plan())
    if draw.shortfall:
        print(
            f"warning: only {len(draw.samples)} of {draw.requested} requested"
            f" samples eligible for {draw.category!r}",
            file=sys.stderr,
        )
    return draw


def _emit(config: Config, phase: str, category: str, payload: dict) -> list[Path]:
    envelope = ReportEnvelope(
        phase=phase,
        category=category,
        config_digest=config.digest,
        payload=payload,
    )
    paths = emit_report(envelope, config.output_dir, config.formats)
    for path in paths:
        print(path)
    return paths


def cmd_baseline(args: argparse.Namespace) -> int:
    config = load_config(args)
    draw = _load_samples(config)
    scorer = config.build_scorer(config.ledger())
    try:
        report = run_baseline(
            draw.samples, scorer, config.thresholds(), category=draw.category
        )
    except BudgetExhausted as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        _emit(config, "build", draw.category, exc.partial_report.to_dict())
        return 1
    _emit(config, "build", draw.category, report.to_dict())
    return 0


def cmd_attack(args: argparse.Namespace) -> int:
    config = load_config(args)
    draw = _load_samples(config)
    scorer = config.build_scorer(config.ledger())
    try:
        report = run_attack(
            draw.samples,
            scorer,
            config.rules(),
            config.strategy(),
            config.thresholds(),
            category=draw.category,
        )
    except BudgetExhausted as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        _emit(config, "attack", draw.category, exc.partial_report.to_dict())
        return 1
    _emit(config, "attack", draw.category, report.to_dict())
    return 0


def _defend(config: Config, attack_report: AttackReport, scorer) -> tuple[int, dict]:
    options = config.defense_options()
    report = defend_attack_report(
        attack_report,
        scorer,
        config.dictionary(),
        config.reversal_map(),
        aggregation=options["aggregation"],
        thresholds=config.thresholds(),
        max_edit=options["max_edit"],
        cap=options["cap"],
        combo_cap=options["combo_cap"],
        log_path=options["log_path"],
    )
    return (1 if report.partial else 0), report.to_dict()


def _find_attack_report(config: Config, args: argparse.Namespace) -> AttackReport:
    explicit = getattr(args, "attack_report", None)
    if explicit:
        path = Path(explicit)
    else:
        category = config.plan().category
        path = config.output_dir / f"attack-{category}-{config.digest}.json"
        if not path.exists():
            raise ConfigError(
                f"no attack report at {path}; run `attack` first or pass"
                f" --attack-report"
            )
    if not path.exists():
        raise ConfigError(f"attack report not found: {path}")
    envelope = json.loads(path.read_text(encoding="utf-8"))
    payload = envelope.get("payload", envelope)
    return AttackReport.from_dict(payload)


def cmd_defend(args: argparse.Namespace) -> int:
    config = load_config(args)
    attack_report = _find_attack_report(config, args)
    scorer = config.build_scorer(config.ledger())
    code, payload = _defend(config, attack_report, scorer)
    _emit(config, "defend", attack_report.category, payload)
    if code:
        print("budget exhausted during defend; report is partial", file=sys.stderr)
    return code


def cmd_cycle(args: argparse.Namespace) -> int:
    """Baseline, attack, and defend in one run, reusing scores."""
    config = load_config(args)
    draw = _load_samples(config)
    scorer = config.build_scorer(config.ledger())
    thresholds = config.thresholds()

    try:
        baseline = run_baseline(
            draw.samples, scorer, thresholds, category=draw.category
        )
    except BudgetExhausted as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        _emit(config, "build", draw.category, exc.partial_report.to_dict())
        return 1
    _emit(config, "build", draw.category, baseline.to_dict())

    try:
        attack = run_attack(
            draw.samples,
            scorer,
            config.rules(),
            config.strategy(),
            thresholds,
            baseline=baseline,
            category=draw.category,
        )
    except BudgetExhausted as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        _emit(config, "attack", draw.category, exc.partial_report.to_dict())
        return 1
    _emit(config, "attack", draw.category, attack.to_dict())

    code, payload = _defend(config, attack, scorer)
    _emit(config, "defend", draw.category, payload)
    if code:
        print("budget exhausted during defend; report is partial", file=sys.stderr)
    return code


def _render_distribution(name: str, counts: dict) -> str:
    total = sum(counts.values()) or 1
    cells = "  ".join(
        f"{k} {v:4d} ({100 * v / total:5.1f}%)" for k, v in sorted(counts.items())
    )
    return f"  {name:<18} {cells}"


def render_report(path: str | Path) -> str:
    """Human-readable summary of an emitted JSON report."""
    envelope = json.loads(Path(path).read_text(encoding="utf-8"))
    payload = envelope.get("payload", {})
    lines = [
        f"phase: {envelope.get('phase')}   category: {envelope.get('category')}"
        f"   digest: {envelope.get('config_digest')}"
        f"   tool: {envelope.get('tool_version')}"
    ]
    if payload.get("partial"):
        lines.append("  PARTIAL REPORT (budget exhausted)")
    phase = envelope.get("phase")
    if phase == "build":
        lines.append(f"  scorer: {payload.get('scorer_id')}")
        lines.append(f"  samples scored: {len(payload.get('per_sample', []))}")
        lines.append(_render_distribution("distribution", payload["distribution"]))
    elif phase == "attack":
        outcomes = payload.get("outcomes", [])
        lines.append(
            f"  scorer: {payload.get('scorer_id')}"
            f"   strategy: {payload.get('strategy')}"
        )
        lines.append(f"  variants scored: {len(outcomes)}")
        lines.append(
            f"  flips: {payload.get('flip_count')}"
            + (
                f" ({100 * payload['flip_count'] / len(outcomes):.1f}% of variants)"
                if outcomes
                else ""
            )
        )
        lines.append(_render_distribution("pre-distribution", payload["pre_distribution"]))
        lines.append(
            _render_distribution("post-distribution", payload["post_distribution"])
        )
        reductions = payload.get("per_sample_max_reduction", {})
        if reductions:
            worst_id = min(reductions, key=lambda k: (reductions[k], k))
            lines.append(
                f"  max reduction: {reductions[worst_id]:+.4f} (sample {worst_id})"
            )
    elif phase == "defend":
        lines.append(
            f"  scorer: {payload.get('scorer_id')}"
            f"   aggregation: {payload.get('aggregation')}"
        )
        lines.append(
            f"  defended {payload.get('defended_count')} of"
            f" {payload.get('flipped_count')} flipped variants;"
            f" attacks detected: {payload.get('detected_count')}"
        )
        rate = payload.get("restoration_rate")
        lines.append(
            f"  restored: {payload.get('restored_count')}"
            + (f" ({100 * rate:.1f}%)" if rate is not None else "")
        )
    return "\n".join(lines)


def cmd_report(args: argparse.Namespace) -> int:
    print(render_report(args.path))
    return 0


# --- argument parsing -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="badtext",
        description="Baseline, attack, and defend a black-box text classifier.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help=f"config file (or ${CONFIG_ENV_VAR})")
        p.add_argument("--dataset", help="override dataset.path")
        p.add_argument("--text-column", dest="text_column")
        p.add_argument("--category")
        p.add_argument("--count", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threshold", type=float)
        p.add_argument(
            "--top",
            action="store_const",
            const=True,
            default=None,
            help="take the highest-scoring rows instead of a seeded draw",
        )
        p.add_argument(
            "--strategy", choices=[s.value for s in Strategy], default=None
        )
        p.add_argument("--mode", choices=[m.value for m in RuleMode], default=None)
        p.add_argument("--output", help="override output.directory")

    p_baseline = sub.add_parser("baseline", help="score the sampled corpus")
    add_common(p_baseline)
    p_baseline.set_defaults(func=cmd_baseline)

    p_attack = sub.add_parser("attack", help="sweep variants and measure damage")
    add_common(p_attack)
    p_attack.set_defaults(func=cmd_attack)

    p_defend = sub.add_parser(
        "defend", help="re-score a prior attack report through the defense"
    )
    add_common(p_defend)
    p_defend.add_argument(
        "--attack-report",
        dest="attack_report",
        help="attack report JSON (default: the file matching the config digest)",
    )
    p_defend.set_defaults(func=cmd_defend)

    p_cycle = sub.add_parser("cycle", help="baseline, attack, defend in one run")
    add_common(p_cycle)
    p_cycle.set_defaults(func=cmd_cycle)

    p_report = sub.add_parser("report", help="render a report file as text")
    p_report.add_argument("path")
    p_report.set_defaults(func=cmd_report)

    return parser


def run_command(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (BadTextError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
