"""corpusforge command line: the full pipeline as subcommands.

Exit codes: 0 success, 1 usage error, 2 data error (malformed input),
3 transport error (endpoint unreachable). Diagnostics go to stderr; data
only to files. Every run that produces output also writes a JSON run
report (inputs, config digest, stage reports, wall time) — auditability is
the product; reports are written even when a run fails.
"""

from __future__ import annotations

import datetime
import json
import os
import sys
import time

import click

from . import corpus_io
from .clients import HttpChatClient, HttpEmbedderClient, HttpMlmScorer, TransportError
from .config import ConfigError, config_digest, load_config
from .embedding import distance_histogram
from .generator import GenerationConfig, run_campaign
from .model import (
    Conversation,
    Corpus,
    Role,
    UnparseableTranscript,
    parse_raw_fauno,
    split_fauno_records,
)
from .quality import filter_by_quality, score_corpus
from .refinery import EnglishPolicy, FlowPattern, RefineConfig, run_refinement
from .seeds import MalformedTree, extract_seeds, load_trees

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRANSPORT = 3

_DATA_ERRORS = (
    corpus_io.MalformedRecord,
    corpus_io.DuplicateConversationId,
    UnparseableTranscript,
    MalformedTree,
    ConfigError,
    FileNotFoundError,
    json.JSONDecodeError,
    ValueError,
)


class RunReport:
    def __init__(self, command: str, config: dict | None = None):
        self.data = {
            "command": command,
            "inputs": {},
            "outputs": {},
            "config_digest": config_digest(config) if config else None,
            "stage_reports": [],
            "status": "running",
            "error": None,
            "wall_time_s": None,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        self._start = time.monotonic()

    def finish(self, status: str, error: str | None = None):
        self.data["status"] = status
        self.data["error"] = error
        self.data["wall_time_s"] = round(time.monotonic() - self._start, 3)

    def add_manifest(self, corpus: Corpus):
        self.data["stage_reports"] = [
            corpus_io.report_to_dict(r) for r in corpus.manifest
        ]

    def write(self, path: str | None):
        if not path:
            return
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.data, f, indent=2, ensure_ascii=False)
            f.write("\n")


def _run(report: RunReport, report_path: str | None, work) -> int:
    try:
        work()
    except _DATA_ERRORS as e:
        click.echo(f"error: {e}", err=True)
        report.finish("data_error", str(e))
        report.write(report_path)
        return EXIT_DATA
    except TransportError as e:
        click.echo(f"transport error: {e}", err=True)
        report.finish("transport_error", str(e))
        report.write(report_path)
        return EXIT_TRANSPORT
    report.finish("ok")
    report.write(report_path)
    return EXIT_OK


def _default_report(out: str | None, explicit: str | None) -> str | None:
    if explicit:
        return explicit
    return f"{out}.report.json" if out else None


def _env_or_config(env_var: str, config: dict, key: str) -> str | None:
    return os.environ.get(env_var) or config["endpoints"][key]


@click.group()
@click.option("--jobs", type=int, default=os.cpu_count() or 1, show_default="n_cpus",
              help="Worker pool size for parallel stages.")
@click.pass_context
def cli(ctx, jobs):
    ctx.obj = {"jobs": jobs}


@cli.command("parse")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--delimiter", default="\n===\n", show_default=False,
              help="Record delimiter for concatenated transcript files.")
@click.option("--report", "report_path", type=click.Path(), default=None)
def cmd_parse(in_path, out_path, delimiter, report_path):
    """Parse raw tagged transcripts into corpus JSONL."""
    report = RunReport("parse")
    report.data["inputs"]["in"] = in_path
    report.data["outputs"]["out"] = out_path

    def work():
        if os.path.isdir(in_path):
            records = []
            for name in sorted(os.listdir(in_path)):
                path = os.path.join(in_path, name)
                if os.path.isfile(path):
                    with open(path, "r", encoding="utf-8") as f:
                        records.append((name, f.read()))
        else:
            with open(in_path, "r", encoding="utf-8") as f:
                raw = f.read()
            records = [
                (f"r{i}", rec) for i, rec in enumerate(split_fauno_records(raw, delimiter))
            ]
        conversations = []
        for name, rec in records:
            conv_id = f"fauno-{os.path.splitext(name)[0]}"
            conv = parse_raw_fauno(rec, conversation_id=conv_id)
            conversations.append(Conversation(
                id=conv.id, origin=conv.origin, messages=conv.messages,
                provenance={"source": f"{os.path.basename(in_path)}:{name}"},
            ))
        corpus_io.write_corpus_jsonl(Corpus(tuple(conversations)), out_path)
        report.data["outputs"]["conversations"] = len(conversations)

    return_code = _run(report, _default_report(out_path, report_path), work)
    sys.exit(return_code)


@cli.command("refine")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--report", "report_path", type=click.Path(), default=None)
@click.pass_context
def cmd_refine(ctx, in_path, out_path, config_path, report_path):
    """Run the full refinement pipeline."""
    config = load_config(config_path)
    report = RunReport("refine", config)
    report.data["inputs"]["in"] = in_path
    report.data["outputs"]["out"] = out_path

    def work():
        corpus = corpus_io.read_corpus_jsonl(in_path)
        rc = config["refine"]
        refine_config = RefineConfig(
            flow=FlowPattern(
                expected_first_role_after_system=Role(rc["flow"]["first_role"]),
                strict_alternation=rc["flow"]["strict"],
            ),
            dedup_fraction_threshold=rc["dedup"]["fraction_threshold"],
            lang_min_confidence=rc["lang"]["min_confidence"],
            english_policy=EnglishPolicy(rc["english_policy"]),
            triage_prompt_template=rc["triage"]["prompt_template"],
            triage_max_retries=rc["triage"]["max_retries"],
            jobs=ctx.obj["jobs"],
        )
        generator_url = _env_or_config("CORPUSFORGE_GENERATOR_URL", config, "generator_url")
        chat_client = None
        if generator_url:
            chat_client = HttpChatClient(
                base_url=generator_url,
                token=os.environ.get("CORPUSFORGE_GENERATOR_TOKEN"),
            )
        refined = run_refinement(corpus, refine_config, chat_client=chat_client)
        corpus_io.write_corpus_jsonl(refined, out_path)
        report.add_manifest(refined)

    sys.exit(_run(report, _default_report(out_path, report_path), work))


@cli.command("seeds")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--lang", required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path(), default=None)
def cmd_seeds(in_path, lang, out_path, report_path):
    """Extract root-to-leaf seed conversations from a tree export."""
    report = RunReport("seeds")
    report.data["inputs"].update({"in": in_path, "lang": lang})
    report.data["outputs"]["out"] = out_path

    def work():
        trees = load_trees(in_path, lang)
        seeds = extract_seeds(trees)
        corpus_io.write_corpus_jsonl(Corpus(tuple(seeds)), out_path)
        report.data["outputs"].update({
            "trees": len(trees),
            "messages": sum(len(t.nodes) for t in trees),
            "seeds": len(seeds),
        })

    sys.exit(_run(report, _default_report(out_path, report_path), work))


@cli.command("generate")
@click.option("--seeds", "seeds_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--store", "store_path", required=True, type=click.Path())
@click.option("--serial", is_flag=True, default=False,
              help="Fully sequential generation (the flowchart semantics).")
@click.option("--report", "report_path", type=click.Path(), default=None)
def cmd_generate(seeds_path, config_path, out_path, store_path, serial, report_path):
    """Run an embedding-gated self-chat generation campaign."""
    config = load_config(config_path)
    report = RunReport("generate", config)
    report.data["inputs"]["seeds"] = seeds_path
    report.data["outputs"].update({"out": out_path, "store": store_path})

    def work():
        seed_corpus = corpus_io.read_corpus_jsonl(seeds_path)
        gc = config["generate"]
        gen_config = GenerationConfig(
            n_seeds=gc["n_seeds"],
            target_length_min=gc["target_length_min"],
            target_length_max=gc["target_length_max"],
            similarity_threshold=gc["similarity_threshold"],
            max_retries_per_turn=gc["max_retries_per_turn"],
            rng_seed=config["rng_seed"],
            prompt_templates={
                Role(r): t for r, t in gc["prompt_templates"].items()
            },
            model=gc["model"],
            temperature=gc["temperature"],
            max_tokens=gc["max_tokens"],
        )
        generator_url = _env_or_config("CORPUSFORGE_GENERATOR_URL", config, "generator_url")
        embed_url = _env_or_config("CORPUSFORGE_EMBED_URL", config, "embed_url")
        if not generator_url or not embed_url:
            raise TransportError("generator and embedding endpoints are required")
        chat_client = HttpChatClient(
            base_url=generator_url,
            token=os.environ.get("CORPUSFORGE_GENERATOR_TOKEN"),
            model=gc["model"], temperature=gc["temperature"], max_tokens=gc["max_tokens"],
        )
        embedder = HttpEmbedderClient(base_url=embed_url)
        result = run_campaign(
            tuple(seed_corpus.conversations), gen_config, chat_client, embedder,
        )
        corpus_io.write_corpus_jsonl(result.corpus, out_path)
        result.store.save(store_path)
        report.add_manifest(result.corpus)
        report.data["outputs"].update({
            "conversations": len(result.corpus),
            "accepted": result.accepted,
            "rejected": result.rejected,
            "failed_conversations": result.failed_conversations,
            "store_size": len(result.store),
        })

    sys.exit(_run(report, _default_report(out_path, report_path), work))


@cli.command("score")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--report", "report_path", type=click.Path(), default=None)
def cmd_score(in_path, out_path, config_path, report_path):
    """Score every message with the masked-LM NLL quality metric."""
    config = load_config(config_path)
    report = RunReport("score", config)
    report.data["inputs"]["in"] = in_path
    report.data["outputs"]["out"] = out_path

    def work():
        corpus = corpus_io.read_corpus_jsonl(in_path)
        mlm_url = _env_or_config("CORPUSFORGE_MLM_URL", config, "mlm_url")
        if not mlm_url:
            raise TransportError("MLM scoring endpoint is required")
        scorer = HttpMlmScorer(base_url=mlm_url)
        qc = config["quality"]
        scored, quality_report = score_corpus(
            corpus, scorer,
            aggregation=qc["aggregation"],
            bins=qc["histogram_bins"],
            hist_range=(0.0, qc["histogram_max"]),
        )
        corpus_io.write_corpus_jsonl(scored, out_path)
        report.data["outputs"].update({
            "scored": quality_report.n_scored,
            "failed": quality_report.n_failed,
            "mean_nll": quality_report.mean,
            "stddev_nll": quality_report.stddev,
            "histogram": [
                {"bin_left": left, "bin_right": right, "count": count}
                for left, right, count in quality_report.histogram.bins
            ],
        })

    sys.exit(_run(report, _default_report(out_path, report_path), work))


@cli.command("filter")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--threshold", type=float, default=2.0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--report", "report_path", type=click.Path(), default=None)
def cmd_filter(in_path, threshold, out_path, config_path, report_path):
    """Drop messages at or above the quality threshold."""
    config = load_config(config_path)
    report = RunReport("filter", config)
    report.data["inputs"].update({"in": in_path, "threshold": threshold})
    report.data["outputs"]["out"] = out_path

    def work():
        corpus = corpus_io.read_corpus_jsonl(in_path)
        filtered, _ = filter_by_quality(
            corpus, threshold=threshold,
            broken_flow_policy=config["quality"]["broken_flow_policy"],
        )
        corpus_io.write_corpus_jsonl(filtered, out_path)
        report.add_manifest(filtered)

    sys.exit(_run(report, _default_report(out_path, report_path), work))


@cli.group("stats")
def cmd_stats():
    """Corpus diagnostics."""


@cmd_stats.command("knn-hist")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--bins", type=int, default=50, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--report", "report_path", type=click.Path(), default=None)
def cmd_knn_hist(in_path, k, bins, out_path, config_path, report_path):
    """Nearest-neighbor cosine-distance histogram (corpus cohesiveness)."""
    config = load_config(config_path)
    report = RunReport("stats.knn-hist", config)
    report.data["inputs"].update({"in": in_path, "k": k})
    report.data["outputs"]["out"] = out_path

    def work():
        corpus = corpus_io.read_corpus_jsonl(in_path)
        embed_url = _env_or_config("CORPUSFORGE_EMBED_URL", config, "embed_url")
        if not embed_url:
            raise TransportError("embedding endpoint is required")
        embedder = HttpEmbedderClient(base_url=embed_url)
        summary = distance_histogram(corpus, embedder, k=k, bins=bins)
        summary.to_csv(out_path)
        report.data["outputs"].update({"n": summary.n, "mean": summary.mean})

    sys.exit(_run(report, _default_report(out_path, report_path), work))


@cli.group("config")
def cmd_config():
    """Configuration helpers."""


@cmd_config.command("default")
def cmd_config_default():
    """Print the full default configuration as JSON."""
    click.echo(json.dumps(load_config(None), indent=2, ensure_ascii=False))


def main(argv=None):
    try:
        cli(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as e:
        return e.exit_code if e.exit_code == 0 else EXIT_USAGE
    except (click.UsageError, click.ClickException) as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        return EXIT_USAGE
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as e:
        # Config problems surfacing before a run report exists.
        click.echo(f"error: {e}", err=True)
        return EXIT_DATA
    except SystemExit as e:
        return e.code or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
