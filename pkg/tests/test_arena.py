import json
import math
import random

import pytest

from genui.arena import (
    ANCHOR_MEAN,
    ComparisonRecord,
    ConflictingDuplicate,
    Dataset,
    DisconnectedGraph,
    MalformedRecord,
    NoArtifacts,
    SCALE,
    UnlabeledArtifact,
    error_stats,
    ingest,
    report,
    solve_elo,
    synthesize,
    win_matrix,
    write_records,
)

ARMS = ("expert", "genui", "markdown", "top_search", "text")

# Benchmark win fractions (percent) for two rater studies, used as frozen
# fixtures: synthesizing verdicts at these fractions must recover the
# expected strength orderings.
GENERAL_FRACTIONS = {
    ("expert", "genui"): (50.0, 35.3),
    ("expert", "markdown"): (90.6, 6.1),
    ("expert", "top_search"): (91.1, 6.7),
    ("expert", "text"): (97.3, 2.7),
    ("genui", "markdown"): (82.8, 13.9),
    ("genui", "top_search"): (90.0, 6.7),
    ("genui", "text"): (97.0, 3.0),
    ("markdown", "top_search"): (44.4, 52.2),
    ("markdown", "text"): (81.1, 1.1),
    ("top_search", "text"): (58.9, 38.3),
}
GENERAL_ORDER = ["expert", "genui", "markdown", "top_search", "text"]

INFO_SEEKING_FRACTIONS = {
    ("expert", "genui"): (55.5, 30.0),
    ("expert", "markdown"): (98.0, 0.0),
    ("expert", "top_search"): (79.0, 4.0),
    ("expert", "text"): (100.0, 0.0),
    ("genui", "markdown"): (90.5, 6.5),
    ("genui", "top_search"): (73.5, 19.0),
    ("genui", "text"): (95.5, 3.5),
    ("markdown", "top_search"): (36.0, 60.0),
    ("markdown", "text"): (84.0, 13.5),
    ("top_search", "text"): (70.5, 24.0),
}
INFO_SEEKING_ORDER = ["expert", "genui", "top_search", "markdown", "text"]


def as_probs(fractions):
    return {pair: (fa / 100.0, fb / 100.0)
            for pair, (fa, fb) in fractions.items()}


def dataset_from(records, study="s"):
    ds = Dataset(study)
    ds.records = [r for r in records if r.study == study]
    return ds


class TestIngest:
    def write(self, tmp_path, lines):
        p = tmp_path / "records.jsonl"
        p.write_text("\n".join(lines) + "\n")
        return p

    def rec(self, **kw):
        base = dict(study="s", prompt_id="p1", left="a", right="b",
                    rater="r1", verdict="left")
        base.update(kw)
        return json.dumps(base)

    def test_two_raters_on_same_pair_is_fine(self, tmp_path):
        path = self.write(tmp_path, [
            self.rec(rater="r1"), self.rec(rater="r2", verdict="right")])
        datasets = ingest(path)
        assert len(datasets["s"].records) == 2

    def test_same_rater_twice_conflicts_even_if_agreeing(self, tmp_path):
        path = self.write(tmp_path, [self.rec(), self.rec()])
        with pytest.raises(ConflictingDuplicate):
            ingest(path)

    def test_swapped_pair_is_the_same_pairing(self, tmp_path):
        path = self.write(tmp_path, [
            self.rec(), self.rec(left="b", right="a", verdict="right")])
        with pytest.raises(ConflictingDuplicate):
            ingest(path)

    def test_bad_verdict_reports_line_number(self, tmp_path):
        path = self.write(tmp_path, [self.rec(), self.rec(rater="r2",
                                                          verdict="both")])
        with pytest.raises(MalformedRecord) as err:
            ingest(path)
        assert err.value.line == 2

    def test_missing_field_rejected(self, tmp_path):
        bad = json.dumps({"study": "s", "left": "a", "right": "b"})
        with pytest.raises(MalformedRecord):
            ingest(self.write(tmp_path, [bad]))

    def test_invalid_json_rejected(self, tmp_path):
        with pytest.raises(MalformedRecord):
            ingest(self.write(tmp_path, ["{not json"]))

    def test_blank_lines_skipped_and_studies_split(self, tmp_path):
        path = self.write(tmp_path, [
            self.rec(study="one"), "", self.rec(study="two", rater="r9")])
        datasets = ingest(path)
        assert set(datasets) == {"one", "two"}

    def test_self_comparison_rejected(self):
        with pytest.raises(ValueError):
            ComparisonRecord("s", "p", "a", "a", "r", "left")


class TestWinMatrix:
    def test_neutrals_stay_in_denominator(self):
        records = synthesize("s", {("a", "b"): (0.500, 0.353)}, 1000)
        m = win_matrix(dataset_from(records))
        assert m.wins["a"]["b"] == pytest.approx(0.500)
        assert m.wins["b"]["a"] == pytest.approx(0.353)
        # the remaining mass is the neutral fraction, not redistributed
        assert m.wins["a"]["b"] + m.wins["b"]["a"] < 1.0
        assert m.counts["a"]["b"] == 1000

    def test_orientation_independent(self):
        records = [
            ComparisonRecord("s", "p1", "a", "b", "r1", "left"),
            ComparisonRecord("s", "p2", "b", "a", "r1", "right"),
            ComparisonRecord("s", "p3", "a", "b", "r1", "neutral"),
        ]
        m = win_matrix(dataset_from(records))
        assert m.wins["a"]["b"] == pytest.approx(2 / 3)
        assert m.wins["b"]["a"] == pytest.approx(0.0)


class TestSolveElo:
    def test_empty_dataset_all_anchor(self):
        table = solve_elo(Dataset("s"), arms=["a", "b", "c"])
        assert table.ratings == {a: ANCHOR_MEAN for a in ("a", "b", "c")}

    def test_two_arm_closed_form(self):
        # 8 wins vs 2 over 10 games, no ties: with the single regularizing
        # tie the strength ratio is (8 + 0.5) / (2 + 0.5), hence the gap
        records = synthesize("s", {("a", "b"): (0.8, 0.2)}, 10)
        table = solve_elo(dataset_from(records))
        gap = table.ratings["a"] - table.ratings["b"]
        assert gap == pytest.approx(SCALE * math.log10(8.5 / 2.5), abs=1e-6)
        assert sum(table.ratings.values()) / 2 == pytest.approx(ANCHOR_MEAN)

    def test_sweep_stays_finite(self):
        records = synthesize("s", {("a", "b"): (1.0, 0.0)}, 50)
        table = solve_elo(dataset_from(records))
        assert all(math.isfinite(v) for v in table.ratings.values())
        assert table.ratings["a"] > table.ratings["b"]

    def test_record_order_invariance(self):
        records = synthesize("s", as_probs(GENERAL_FRACTIONS), 100)
        shuffled = records[:]
        random.Random(3).shuffle(shuffled)
        a = solve_elo(dataset_from(records))
        b = solve_elo(dataset_from(shuffled))
        for arm in a.ratings:
            assert a.ratings[arm] == pytest.approx(b.ratings[arm], abs=1e-6)

    def test_relabel_invariance(self):
        records = synthesize("s", as_probs(GENERAL_FRACTIONS), 100)
        mapping = {a: f"arm_{i}" for i, a in enumerate(ARMS)}
        renamed = [ComparisonRecord(r.study, r.prompt_id, mapping[r.left],
                                    mapping[r.right], r.rater, r.verdict)
                   for r in records]
        a = solve_elo(dataset_from(records))
        b = solve_elo(dataset_from(renamed))
        for arm in ARMS:
            assert a.ratings[arm] == pytest.approx(b.ratings[mapping[arm]],
                                                   abs=1e-6)

    def test_mirror_invariance(self):
        flip = {"left": "right", "right": "left", "neutral": "neutral"}
        records = synthesize("s", as_probs(GENERAL_FRACTIONS), 100)
        mirrored = [ComparisonRecord(r.study, r.prompt_id, r.right, r.left,
                                     r.rater, flip[r.verdict])
                    for r in records]
        a = solve_elo(dataset_from(records))
        b = solve_elo(dataset_from(mirrored))
        for arm in a.ratings:
            assert a.ratings[arm] == pytest.approx(b.ratings[arm], abs=1e-6)

    def test_disconnected_graph_reports_components(self):
        records = [
            ComparisonRecord("s", "p1", "a", "b", "r", "left"),
            ComparisonRecord("s", "p2", "c", "d", "r", "left"),
        ]
        with pytest.raises(DisconnectedGraph) as err:
            solve_elo(dataset_from(records))
        comps = sorted(tuple(sorted(c)) for c in err.value.components)
        assert comps == [("a", "b"), ("c", "d")]

    def test_stronger_evidence_widens_gap(self):
        gaps = []
        for frac in (0.6, 0.7, 0.8, 0.9):
            records = synthesize("s", {("a", "b"): (frac, 1.0 - frac)}, 200)
            t = solve_elo(dataset_from(records))
            gaps.append(t.ratings["a"] - t.ratings["b"])
        assert gaps == sorted(gaps)
        assert gaps[0] > 0

    def test_general_benchmark_ordering(self):
        records = synthesize("s", as_probs(GENERAL_FRACTIONS), 500)
        table = solve_elo(dataset_from(records))
        assert table.ordering() == GENERAL_ORDER

    def test_info_seeking_benchmark_ordering(self):
        records = synthesize("s", as_probs(INFO_SEEKING_FRACTIONS), 500)
        table = solve_elo(dataset_from(records))
        assert table.ordering() == INFO_SEEKING_ORDER


class TestSynthesize:
    def test_deterministic_rounding_hits_exact_counts(self):
        records = synthesize("s", {("a", "b"): (0.353, 0.5)}, 1000)
        counts = dataset_from(records).pair_counts()[("a", "b")]
        assert counts == {"wins_a": 353.0, "wins_b": 500.0, "ties": 147.0}

    def test_seeded_sampling_round_trip(self):
        records = synthesize("s", as_probs(GENERAL_FRACTIONS), 2000, seed=11)
        m = win_matrix(dataset_from(records))
        for (a, b), (fa, fb) in as_probs(GENERAL_FRACTIONS).items():
            assert m.wins[a][b] == pytest.approx(fa, abs=0.03)
            assert m.wins[b][a] == pytest.approx(fb, abs=0.03)

    def test_same_seed_same_records(self):
        spec = {("a", "b"): (0.5, 0.3)}
        assert synthesize("s", spec, 50, seed=4) == synthesize("s", spec, 50,
                                                               seed=4)

    def test_overfull_fractions_rejected(self):
        with pytest.raises(ValueError):
            synthesize("s", {("a", "b"): (0.7, 0.7)}, 10)

    def test_write_then_ingest_round_trip(self, tmp_path):
        records = synthesize("s", {("a", "b"): (0.6, 0.2)}, 40)
        path = tmp_path / "r.jsonl"
        write_records(records, path)
        back = ingest(path)["s"]
        assert back.records == records


class TestErrorStats:
    def test_rates(self):
        stats = error_stats([("m1", True), ("m1", False), ("m1", True),
                             ("m2", False)])
        assert stats.per_arm["m1"]["rate"] == pytest.approx(2 / 3)
        assert stats.per_arm["m2"] == {"n_runs": 1, "n_output_errors": 0,
                                       "rate": 0.0}

    def test_empty_raises(self):
        with pytest.raises(NoArtifacts):
            error_stats([])

    def test_unlabeled_raises(self):
        with pytest.raises(UnlabeledArtifact):
            error_stats([("", True)])


class TestReport:
    def test_bundle_files_written(self, tmp_path):
        records = synthesize("demo", as_probs(GENERAL_FRACTIONS), 50)
        datasets = {"demo": dataset_from(records, "demo")}
        errors = {"demo": error_stats([("expert", False), ("text", True)])}
        bundle = report(datasets, tmp_path, errors)
        for name in ("elo.json", "wins.json", "errors.json", "report.txt"):
            assert (tmp_path / name).exists()
        assert set(bundle["elo"]["demo"]["ratings"]) == set(ARMS)
        text = (tmp_path / "report.txt").read_text()
        assert "Ratings (demo)" in text and "Output errors (demo)" in text

    def test_no_data_markers(self, tmp_path):
        bundle = report({"empty": Dataset("empty")}, tmp_path)
        assert bundle["elo"]["empty"] == {"no_data": True}
        assert "no data" in (tmp_path / "report.txt").read_text()

    def test_empty_report(self, tmp_path):
        report({}, tmp_path)
        assert "no data" in (tmp_path / "report.txt").read_text()


class TestCli:
    def test_synth_then_report(self, tmp_path):
        from click.testing import CliRunner
        from genui.cli import main

        spec = {
            "study": "cli-study",
            "n_per_pair": 60,
            "pairs": {f"{a}|{b}": [fa / 100, fb / 100]
                      for (a, b), (fa, fb) in GENERAL_FRACTIONS.items()},
        }
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        records_path = tmp_path / "records.jsonl"
        out_dir = tmp_path / "out"

        runner = CliRunner()
        r1 = runner.invoke(main, ["eval", "synth", str(spec_path),
                                  "-o", str(records_path)])
        assert r1.exit_code == 0, r1.output
        r2 = runner.invoke(main, ["eval", "report", str(records_path),
                                  "-o", str(out_dir)])
        assert r2.exit_code == 0, r2.output
        elo = json.loads((out_dir / "elo.json").read_text())
        ratings = elo["cli-study"]["ratings"]
        ordered = sorted(ratings, key=ratings.get, reverse=True)
        assert ordered == GENERAL_ORDER

    def test_ingest_validates(self, tmp_path):
        from click.testing import CliRunner
        from genui.cli import main

        bad = tmp_path / "bad.jsonl"
        bad.write_text("{broken\n")
        r = CliRunner().invoke(main, ["eval", "ingest", str(bad)])
        assert r.exit_code != 0
