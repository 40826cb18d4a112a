#!/usr/bin/env python3
"""Smoke test for the divsel Python extension.

Builds the cdylib with cargo, copies it next to this script under the
importable module name, and exercises the main types and operations.

Usage: python3 python/smoke_test.py [--debug]
"""

import json
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def build_and_import(debug: bool):
    profile = "debug" if debug else "release"
    cmd = ["cargo", "build", "-p", "divsel-py"]
    if not debug:
        cmd.append("--release")
    subprocess.run(cmd, cwd=ROOT, check=True)
    built = ROOT / "target" / profile / "libdivsel.so"
    if not built.exists():  # macOS
        built = ROOT / "target" / profile / "libdivsel.dylib"
    dest = pathlib.Path(__file__).parent / "divsel.so"
    shutil.copy2(built, dest)
    sys.path.insert(0, str(dest.parent))
    import divsel

    return divsel


def main():
    divsel = build_and_import("--debug" in sys.argv[1:])

    # embeddings: validation and normalization
    corpus = divsel.EmbeddingSet.from_records(
        [
            ("sunny day", "weather", [1.0, 0.0, 0.0]),
            ("rainy day", "weather", [0.9, 0.1, 0.0]),
            ("stock market", "finance", [0.0, 1.0, 0.0]),
            ("bond yields", "finance", [0.1, 0.9, 0.0]),
            ("soccer match", "sports", [0.0, 0.0, 1.0]),
        ],
        role="corpus",
    )
    assert len(corpus) == 5 and corpus.dimension() == 3
    assert abs(sum(u * u for u in corpus.unit(1)) - 1.0) < 1e-9

    try:
        divsel.EmbeddingSet.from_records([("zero", None, [0.0, 0.0])])
    except ValueError as e:
        assert "zero-norm" in str(e)
    else:
        raise AssertionError("zero-norm vector must be rejected")

    # kernel geometry
    kernel = divsel.cosine_kernel(corpus)
    assert kernel.size() == 5
    assert kernel.sim(0, 0) == 1.0
    assert abs(kernel.sim(0, 4)) < 1e-12
    assert kernel.sim(0, 1) == kernel.sim(1, 0)

    # objective pieces
    cfg = divsel.SelectionConfig(lambda_=0.1, k1=3, k=2)
    v = divsel.objective_value(kernel, [0, 2, 4], config=cfg)
    assert abs(v["f"] - (v["coverage"] + 0.1 * v["diversity"])) < 1e-12
    assert abs(divsel.log_det_diversity(kernel, [0, 2, 4], config=cfg)) < 1e-9

    # stage 1 picks one item per topic cluster before any duplicate
    stage1 = divsel.retrieve_stage1(kernel, config=cfg)
    assert len(stage1["selected"]) == 3
    assert stage1["selected"] == divsel.naive_greedy(kernel, config=cfg)
    picked_labels = {corpus.labels()[i] for i in stage1["selected"]}
    assert picked_labels == {"weather", "finance", "sports"}

    # stage 2 against a weather-ish query set
    queries = divsel.EmbeddingSet.from_records(
        [("is it going to rain", None, [0.95, 0.05, 0.0])], role="query"
    )
    union = divsel.cosine_kernel(corpus, queries)
    q = [5]
    ranked = divsel.rank_stage2(union, stage1["selected"], q, config=cfg)
    assert len(ranked) == 2
    assert ranked[0]["gain"] >= ranked[1]["gain"]
    single = divsel.conditional_gain(union, q, ranked[0]["index"], config=cfg)
    assert abs(single - ranked[0]["gain"]) < 1e-12

    # brute force agrees with greedy here
    s_opt, f_opt = divsel.brute_force_optimum(kernel, 3, config=cfg)
    f_greedy = divsel.objective_value(kernel, stage1["selected"], config=cfg)["f"]
    assert f_greedy >= (1 - 1 / math.e) * f_opt - 1e-9

    # dispersion of the diverse pick
    stats = divsel.dispersion_stats(kernel, stage1["selected"], config=cfg)
    assert stats["mean_pairwise_sim"] < 0.2

    # prompt assembly and permutations
    prompt = divsel.assemble_prompt(
        "Answer briefly.", [("a", "b")], "c"
    )
    assert prompt.startswith("### Instruction:\nAnswer briefly.\n")
    assert "#Input: a\n#Response: b\n" in prompt
    assert prompt.endswith("### Response:\n")
    assert len(divsel.enumerate_permutations(["x", "y", "z"])) == 6

    # synthetic generation + end-to-end run with artifacts
    synth = divsel.generate_synthetic(n=40, d=8, clusters=4, noise=0.2, seed=7)
    assert len(synth) == 40
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        synth.save(tmp / "corpus.tsv")
        divsel.generate_synthetic(n=3, d=8, clusters=3, noise=0.1, seed=8).save(
            tmp / "queries.tsv"
        )
        report = json.loads(
            divsel.run_select(
                tmp / "corpus.tsv",
                tmp / "queries.tsv",
                tmp / "out",
                k1=10,
                k=3,
                lambda_stage1=0.05,
                lambda_stage2=0.05,
                emit_prompt=True,
                task_description="Name the cluster.",
            )
        )
        assert report["config_echo"]["lambda_stage1"] == 0.05
        assert len(report["stage2"]) == 3
        assert (tmp / "out" / "report.json").exists()
        assert (tmp / "out" / "stage1_ids.txt").exists()
        assert (tmp / "out" / "prompts" / "query_0000.txt").exists()

        # reload what we wrote: bit-for-bit normalization round trip
        back = divsel.EmbeddingSet.load(tmp / "corpus.tsv")
        assert back.norms() == synth.norms()

    print("smoke test passed")


if __name__ == "__main__":
    main()
