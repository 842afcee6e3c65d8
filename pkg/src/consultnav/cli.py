"""Command-line interface: the full offline pipeline plus service entry points.

Pipeline commands are deterministic given config + seed: synth -> stats ->
train -> simulate -> bench. `serve` hosts the HTTP session API and `consult`
is a thin interactive client for a running service.

Exit codes: 0 success, 1 validation/config, 2 I/O, 3 transport.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import httpx

from .config import AppConfig, load_app_config, require_file
from .domain import extract_corpus_pairs, load_cases, load_vocabulary, write_cases
from .engine import (
    RemoteCore,
    run_batch,
    scripted_core_provider,
)
from .errors import (
    ConfigError,
    DataError,
    ParseError,
    TransportError,
    UndefinedMetricError,
    UnsupportedVersionError,
    ValidationError,
)
from .evaluation import (
    ConsultationMetrics,
    consultation_metrics,
    load_judge_scores,
    multi_choice_score,
    single_choice_verdict,
    summarize_judge,
)
from .policy import load_checkpoint, save_checkpoint
from .synthetic import make_clustered_corpus, make_cyclic_corpus
from .training import TrainingReport, train as run_training
from .transitions import (
    fit_transitions,
    load_transition_model,
    normalized_entropy,
    save_transition_model,
)

EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_TRANSPORT = 3

_VALIDATION_ERRORS = (
    ConfigError,
    ValidationError,
    ParseError,
    DataError,
    UndefinedMetricError,
    UnsupportedVersionError,
    ValueError,
)


def cli_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except TransportError as exc:
            click.echo(f"transport error: {exc}", err=True)
            sys.exit(EXIT_TRANSPORT)
        except _VALIDATION_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except OSError as exc:
            click.echo(f"I/O error: {exc}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


def _write_json(doc, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(doc, handle, indent=2, ensure_ascii=False)
        handle.write("\n")


config_option = click.option(
    "-c",
    "--config",
    "config_path",
    required=True,
    type=click.Path(dir_okay=False),
    help="Path to the JSON application config.",
)


@click.group()
@click.version_option(package_name="consultnav")
def main() -> None:
    """Consultation-navigation engine."""


@main.command()
@config_option
@click.option("--kind", type=click.Choice(["clustered", "cyclic"]), default="clustered")
@click.option("--train-cases", default=160, show_default=True)
@click.option("--eval-cases", default=40, show_default=True)
@cli_errors
def synth(config_path: str, kind: str, train_cases: int, eval_cases: int) -> None:
    """Generate the deterministic synthetic corpora named in the config."""
    config = load_app_config(config_path)
    vocab = load_vocabulary(config.vocabulary)
    if config.corpus_train is None or config.corpus_eval is None:
        raise ConfigError("synth needs both corpus.train and corpus.eval paths in the config")
    if kind == "clustered":
        train_corpus = make_clustered_corpus(vocab.size, n_cases=train_cases, seed=config.seed)
        eval_corpus = make_clustered_corpus(vocab.size, n_cases=eval_cases, seed=config.seed + 1)
    else:
        train_corpus = make_cyclic_corpus(vocab.size, n_cases=train_cases, seed=config.seed)
        eval_corpus = make_cyclic_corpus(vocab.size, n_cases=eval_cases, seed=config.seed + 1)
    for corpus, path in ((train_corpus, config.corpus_train), (eval_corpus, config.corpus_eval)):
        path.parent.mkdir(parents=True, exist_ok=True)
        write_cases(corpus, path)
        click.echo(f"wrote {len(corpus)} cases -> {path}")


@main.command()
@config_option
@cli_errors
def stats(config_path: str) -> None:
    """Fit and persist the symptom-transition model from the training corpus."""
    config = load_app_config(config_path)
    vocab = load_vocabulary(config.vocabulary)
    cases = load_cases(require_file(config.corpus_train, "training corpus"), vocab)
    model = fit_transitions(cases, vocab.size, alpha=config.alpha)
    config.transition_model_path.parent.mkdir(parents=True, exist_ok=True)
    save_transition_model(model, config.transition_model_path)

    observed = [i for i in range(model.n) if model.row_totals[i] > 0]
    entropies = [normalized_entropy(model, i) for i in observed]
    click.echo(f"cases: {len(cases)}  transitions: {int(model.pair_counts.sum())}")
    click.echo(f"rows with data: {len(observed)}/{model.n}")
    if entropies:
        click.echo(
            "normalized entropy over observed rows: "
            f"mean {sum(entropies)/len(entropies):.4f}  "
            f"min {min(entropies):.4f}  max {max(entropies):.4f}"
        )
    click.echo(f"model -> {config.transition_model_path}")


@main.command()
@config_option
@cli_errors
def extract(config_path: str) -> None:
    """Extract sliding-window state-action pairs from the training corpus."""
    config = load_app_config(config_path)
    vocab = load_vocabulary(config.vocabulary)
    cases = load_cases(require_file(config.corpus_train, "training corpus"), vocab)
    pairs = extract_corpus_pairs(cases, config.policy.max_window)
    config.pairs_path.parent.mkdir(parents=True, exist_ok=True)
    with open(config.pairs_path, "w", encoding="utf-8", newline="\n") as handle:
        for pair in pairs:
            handle.write(
                json.dumps(
                    {
                        "case_id": pair.case_id,
                        "position": pair.position,
                        "state": list(pair.state),
                        "action": pair.action,
                    }
                )
                + "\n"
            )
    click.echo(f"extracted {len(pairs)} pairs from {len(cases)} cases -> {config.pairs_path}")


def _echo_report(report: TrainingReport) -> None:
    click.echo(f"{'epoch':>5}  {'bc':>10}  {'po':>10}  {'entropy':>10}  {'total':>10}  {'accuracy':>8}")
    for record in report.epochs:
        click.echo(
            f"{record.epoch:>5}  {record.bc_loss:>10.5f}  {record.po_loss:>10.5f}  "
            f"{record.entropy_loss:>10.5f}  {record.total_loss:>10.5f}  {record.holdout_accuracy:>8.4f}"
        )
    click.echo(
        f"objective {report.objective}: {report.n_pairs} pairs "
        f"({report.n_holdout} held out), final accuracy {report.final_accuracy:.4f}, "
        f"wall clock {report.wall_clock_seconds:.1f}s"
    )


@main.command(name="train")
@config_option
@cli_errors
def train_cmd(config_path: str) -> None:
    """Train the navigator policy and write checkpoint + report."""
    config = load_app_config(config_path)
    vocab = load_vocabulary(config.vocabulary)
    cases = load_cases(require_file(config.corpus_train, "training corpus"), vocab)

    transition_model = None
    if config.training.objective in ("RWBC", "RABC"):
        if not config.transition_model_path.exists():
            raise ConfigError(
                f"objective {config.training.objective} requires the transition model "
                f"({config.transition_model_path}); run `consultnav stats` first"
            )
        transition_model = load_transition_model(config.transition_model_path)

    policy_cfg = config.policy.to_policy_config(vocab.size)
    params, report = run_training(cases, vocab, transition_model, policy_cfg, config.training)

    config.checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, config.checkpoint_path)
    report.checkpoint_path = str(config.checkpoint_path)
    _write_json(report.to_dict(), config.report_path)
    _echo_report(report)
    click.echo(f"checkpoint -> {config.checkpoint_path}")
    click.echo(f"report -> {config.report_path}")


def _simulate_one(config: AppConfig, navigator_on: bool, turn_limit: int) -> ConsultationMetrics:
    vocab = load_vocabulary(config.vocabulary)
    eval_cases = load_cases(require_file(config.corpus_eval, "evaluation corpus"), vocab)
    if not eval_cases:
        raise DataError(f"evaluation corpus is empty: {config.corpus_eval}")

    navigator = None
    if navigator_on:
        navigator = load_checkpoint(require_file(config.checkpoint_path, "navigator checkpoint"))

    if config.core_kind == "remote":
        core_provider = RemoteCore(config.remote)
    else:
        freq_cases = eval_cases
        if config.corpus_train is not None and config.corpus_train.exists():
            freq_cases = load_cases(config.corpus_train, vocab)
        core_provider = scripted_core_provider(freq_cases, vocab, config.scripted)

    transcripts = run_batch(
        eval_cases,
        core_provider,
        vocab,
        navigator=navigator,
        window=config.engine_window,
        seed=config.seed,
        turn_limit=turn_limit,
    )

    label = "navigator-on" if navigator_on else "navigator-off"
    out_dir = config.transcripts_dir / label
    out_dir.mkdir(parents=True, exist_ok=True)
    for transcript in transcripts:
        _write_json(transcript, out_dir / f"{transcript['session_id']}.json")

    cases_by_id = {c.case_id: c for c in eval_cases}
    matched = [cases_by_id[t["session_id"]] for t in transcripts]
    metrics = consultation_metrics(transcripts, matched)
    click.echo(f"[{label}] {len(transcripts)} sessions -> {out_dir}")
    return metrics


@main.command()
@config_option
@click.option("--navigator", type=click.Choice(["on", "off", "both"]), default="both", show_default=True)
@click.option("--turn-limit", type=int, default=None, help="Override the configured turn limit (max 30).")
@cli_errors
def simulate(config_path: str, navigator: str, turn_limit: int | None) -> None:
    """Run replay consultations over the evaluation corpus and score them."""
    config = load_app_config(config_path)
    limit = config.turn_limit if turn_limit is None else turn_limit
    if not 1 <= limit <= 30:
        raise ConfigError(f"turn limit must be in [1, 30], got {limit}")

    results: dict[str, ConsultationMetrics] = {}
    if navigator in ("off", "both"):
        results["navigator_off"] = _simulate_one(config, navigator_on=False, turn_limit=limit)
    if navigator in ("on", "both"):
        results["navigator_on"] = _simulate_one(config, navigator_on=True, turn_limit=limit)

    doc = {key: metrics.to_dict() for key, metrics in results.items()}
    _write_json(doc, config.metrics_path)

    click.echo(f"{'configuration':<16} {'recall_crit':>22} {'eff_dia':>22}")
    for key, metrics in results.items():
        recall = metrics.recall
        eff = metrics.efficiency
        click.echo(
            f"{key:<16} {recall.value:>12.4f} ({recall.numerator}/{recall.denominator})"
            f" {eff.value:>12.4f} ({eff.numerator}/{eff.denominator})"
        )
    click.echo(f"metrics -> {config.metrics_path}")


def _load_jsonl(path: Path, what: str) -> list[tuple[int, dict]]:
    rows = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                rows.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON in {what}: {exc.msg}", line=lineno) from exc
    return rows


@main.command()
@config_option
@click.option("--answers", "answers_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--judge-scores", "judge_path", default=None, type=click.Path(exists=True, dir_okay=False))
@cli_errors
def bench(config_path: str, answers_path: str, gold_path: str, judge_path: str | None) -> None:
    """Score single/multi-choice answer files; judge reliability when provided."""
    config = load_app_config(config_path)

    gold_items: dict[str, dict] = {}
    problems: list[str] = []
    for lineno, obj in _load_jsonl(Path(gold_path), "gold file"):
        item_id = obj.get("item_id")
        kind = obj.get("kind")
        if not isinstance(item_id, str) or kind not in ("single", "multi"):
            problems.append(f"gold line {lineno}: needs string item_id and kind single|multi")
            continue
        if not isinstance(obj.get("options"), list):
            problems.append(f"gold line {lineno}: 'options' must be a list")
            continue
        gold_items[item_id] = obj

    answer_items: dict[str, dict] = {}
    for lineno, obj in _load_jsonl(Path(answers_path), "answers file"):
        item_id = obj.get("item_id")
        if not isinstance(item_id, str):
            problems.append(f"answers line {lineno}: needs string item_id")
            continue
        if item_id not in gold_items:
            problems.append(f"answers line {lineno}: unknown item_id {item_id!r}")
            continue
        answer_items[item_id] = obj
        kind = gold_items[item_id]["kind"]
        if kind == "single" and not isinstance(obj.get("runs"), list):
            problems.append(f"answers line {lineno}: single-choice item needs 'runs'")
        if kind == "multi" and not isinstance(obj.get("selected"), list):
            problems.append(f"answers line {lineno}: multi-choice item needs 'selected'")
    for item_id in gold_items:
        if item_id not in answer_items:
            problems.append(f"item {item_id!r} has no answer record")
    if problems:
        raise ValidationError("schema mismatch:\n  " + "\n  ".join(problems))

    per_item = []
    for item_id, gold in gold_items.items():
        answer = answer_items[item_id]
        options = set(gold["options"])
        if gold["kind"] == "single":
            verdict = single_choice_verdict([str(r) for r in answer["runs"]], str(gold["answer"]))
            score = 1.0 if verdict else 0.0
        else:
            score = multi_choice_score(set(gold["answer"]), set(answer["selected"]), options)
        per_item.append({"item_id": item_id, "kind": gold["kind"], "score": score})

    aggregate = sum(i["score"] for i in per_item) / len(per_item) if per_item else 0.0
    doc: dict = {"aggregate": aggregate, "items": per_item}

    if judge_path is not None:
        reliability = summarize_judge(load_judge_scores(judge_path))
        doc["judge"] = reliability.to_dict()

    _write_json(doc, config.bench_report_path)
    for item in per_item:
        click.echo(f"{item['item_id']:<24} {item['kind']:<7} {item['score']:.4f}")
    click.echo(f"aggregate: {aggregate:.4f} over {len(per_item)} items")
    if "judge" in doc:
        judge = doc["judge"]
        click.echo(
            f"judge: clean {judge['s_clean']:.4f}  perturbed {judge['s_perturbed']:.4f}  "
            f"drop {judge['s_drop']:.4f}"
        )
    click.echo(f"report -> {config.bench_report_path}")


@main.command()
@config_option
@click.option("--host", default=None, help="Override service.host.")
@click.option("--port", default=None, type=int, help="Override service.port.")
@cli_errors
def serve(config_path: str, host: str | None, port: int | None) -> None:
    """Run the HTTP session service (blocks until signalled)."""
    import uvicorn

    from .service import create_app

    config = load_app_config(config_path)
    app = create_app(config)
    uvicorn.run(app, host=host or config.service_host, port=port or config.service_port)


@main.command()
@click.option("--service-url", default="http://127.0.0.1:8000", show_default=True)
@cli_errors
def consult(service_url: str) -> None:
    """Interactive consultation against a running service (thin client)."""
    base = service_url.rstrip("/") + "/api/v1"
    try:
        with httpx.Client(timeout=30.0) as client:
            created = client.post(f"{base}/sessions", json={"mode": "interactive"})
            created.raise_for_status()
            session = created.json()
            session_id = session["session_id"]
            question = session["question"]
            click.echo(f"session {session_id}")
            while True:
                answer = click.prompt(f"[{question}]", default="no", show_default=False)
                response = client.post(f"{base}/sessions/{session_id}/answer", json={"answer": answer})
                response.raise_for_status()
                payload = response.json()
                if payload["status"] != "active":
                    click.echo(f"status: {payload['status']}")
                    click.echo(payload.get("conclusion") or "(no conclusion)")
                    break
                for candidate in payload.get("candidates", []):
                    click.echo(f"    [{candidate['source']:<9}] {candidate['text']}")
                question = payload["question"]
    except httpx.HTTPError as exc:
        raise TransportError(f"service request failed: {exc}") from exc


if __name__ == "__main__":
    main()
