import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankkit.backends import (
    IdentityBackend,
    OracleBackend,
    RetryPolicy,
    ReverseBackend,
    ScriptedBackend,
)
from rankkit.engine import (
    RerankReport,
    WindowConfig,
    rerank_listwise,
    rerank_many,
    rerank_pairwise,
    window_starts,
)
from rankkit.errors import BackendError, InvariantViolation, MissingDoc, TransportError
from rankkit.types import CandidateList, Document, Query

NO_SLEEP = RetryPolicy(sleep=lambda _: None)


def make_fixture(n, qid="q1"):
    docs = {f"d{i}": Document(id=f"d{i}", text=f"passage number {i}") for i in range(1, n + 1)}
    cands = CandidateList(qid, tuple(f"d{i}" for i in range(1, n + 1)))
    return Query(id=qid, text="find the thing"), cands, docs


class TestWindowSchedule:
    def test_hundred_docs_nine_windows(self):
        starts = window_starts(100, WindowConfig(20, 10))
        assert starts == [80, 70, 60, 50, 40, 30, 20, 10, 0]

    def test_degenerate_single_window(self):
        assert window_starts(15, WindowConfig(20, 10)) == [0]
        assert window_starts(20, WindowConfig(20, 10)) == [0]

    def test_ragged_tail_clamps_to_front(self):
        assert window_starts(25, WindowConfig(20, 10)) == [5, 0]

    def test_config_invariant(self):
        with pytest.raises(InvariantViolation):
            WindowConfig(window_size=10, stride=11)
        with pytest.raises(InvariantViolation):
            WindowConfig(window_size=10, stride=0)


class TestRerankListwise:
    def test_reverse_backend_single_window(self):
        q, cands, docs = make_fixture(4)
        out = rerank_listwise(q, cands, docs, ReverseBackend(),
                              window=WindowConfig(4, 2), retry=NO_SLEEP)
        assert out.doc_ids == ("d4", "d3", "d2", "d1")
        assert out.first_stage_scores == (4.0, 3.0, 2.0, 1.0)

    @pytest.mark.parametrize("window,stride", [(2, 1), (3, 2), (5, 5), (20, 10)])
    def test_identity_backend_preserves_order(self, window, stride):
        q, cands, docs = make_fixture(13)
        out = rerank_listwise(q, cands, docs, IdentityBackend(),
                              window=WindowConfig(window, stride), retry=NO_SLEEP)
        assert out.doc_ids == cands.doc_ids

    def test_oracle_backend_sorts_by_grade_across_windows(self):
        q, cands, docs = make_fixture(30)
        grades = {("q1", f"d{i}"): i for i in range(1, 31)}  # d30 best
        out = rerank_listwise(q, cands, docs, OracleBackend(grades),
                              window=WindowConfig(10, 5), retry=NO_SLEEP)
        # the sliding window promotes the global top into the final front window
        assert out.doc_ids[:5] == ("d30", "d29", "d28", "d27", "d26")

    def test_single_window_one_backend_call(self):
        q, cands, docs = make_fixture(8)
        report = RerankReport()
        rerank_listwise(q, cands, docs, IdentityBackend(),
                        window=WindowConfig(20, 10), retry=NO_SLEEP, report=report)
        assert report.backend_calls == 1

    def test_singleton_candidate_list_needs_no_backend(self):
        q, cands, docs = make_fixture(1)
        backend = ScriptedBackend([])  # would raise if consulted
        out = rerank_listwise(q, cands, docs, backend, retry=NO_SLEEP)
        assert out.doc_ids == ("d1",)

    def test_malformed_output_is_repaired(self):
        q, cands, docs = make_fixture(3)
        backend = ScriptedBackend(["[2] > [2] > [1]"])
        report = RerankReport()
        out = rerank_listwise(q, cands, docs, backend,
                              window=WindowConfig(3, 1), retry=NO_SLEEP, report=report)
        assert out.doc_ids == ("d2", "d1", "d3")
        assert report.repair_count == 2

    def test_unparseable_output_retried_then_falls_back(self):
        q, cands, docs = make_fixture(3)
        backend = ScriptedBackend(["I cannot rank these.", "still refusing"])
        report = RerankReport()
        out = rerank_listwise(q, cands, docs, backend,
                              window=WindowConfig(3, 1), retry=NO_SLEEP, report=report)
        assert out.doc_ids == cands.doc_ids
        assert report.fallbacks == 1
        # the retry prompt carries the bad response and a reminder
        retry_prompt = backend.calls[1]
        assert retry_prompt.turns[-2].text == "I cannot rank these."
        assert "could not be parsed" in retry_prompt.turns[-1].text

    def test_parse_retry_can_succeed(self):
        q, cands, docs = make_fixture(3)
        backend = ScriptedBackend(["no ranking here", "[3] > [1] > [2]"])
        out = rerank_listwise(q, cands, docs, backend,
                              window=WindowConfig(3, 1), retry=NO_SLEEP)
        assert out.doc_ids == ("d3", "d1", "d2")

    def test_strict_mode_rejects_repairs(self):
        from rankkit.errors import Unparseable

        q, cands, docs = make_fixture(3)
        backend = ScriptedBackend(["[1] > [1] > [2]"])
        with pytest.raises(Unparseable):
            rerank_listwise(q, cands, docs, backend,
                            window=WindowConfig(3, 1), retry=NO_SLEEP, strict=True)

    def test_backend_error_carries_window_index(self):
        class DeadBackend:
            supports_images = False
            max_candidates_hint = None

            def complete(self, prompt):
                raise TransportError("down")

        q, cands, docs = make_fixture(5)
        with pytest.raises(BackendError) as exc:
            rerank_listwise(q, cands, docs, DeadBackend(),
                            window=WindowConfig(3, 2),
                            retry=RetryPolicy(max_attempts=2, sleep=lambda _: None))
        assert exc.value.window_index == 0

    def test_missing_doc(self):
        q, cands, docs = make_fixture(3)
        del docs["d2"]
        with pytest.raises(MissingDoc):
            rerank_listwise(q, cands, docs, IdentityBackend(), retry=NO_SLEEP)

    @given(st.integers(2, 25), st.data())
    @settings(max_examples=60, deadline=None)
    def test_output_is_permutation_under_adversarial_backend(self, n, data):
        q, cands, docs = make_fixture(n)
        raw = data.draw(st.text(
            alphabet=st.sampled_from(list("[]0123456789> ab")), max_size=40))
        window = data.draw(st.integers(2, n + 3))
        stride = data.draw(st.integers(1, window))
        n_windows = len(window_starts(n, WindowConfig(window, stride)))
        # two responses per window: the raw string, then a retry answer
        backend = ScriptedBackend([raw, raw] * n_windows)
        out = rerank_listwise(q, cands, docs, backend,
                              window=WindowConfig(window, stride), retry=NO_SLEEP)
        assert sorted(out.doc_ids) == sorted(cands.doc_ids)


class TestRerankPairwise:
    def test_stable_partition(self):
        q, cands, docs = make_fixture(3)
        backend = ScriptedBackend(["No", "Yes", "Yes"])
        out = rerank_pairwise(q, cands, docs, backend, retry=NO_SLEEP)
        assert out.doc_ids == ("d2", "d3", "d1")

    def test_all_no_keeps_input_order(self):
        q, cands, docs = make_fixture(4)
        out = rerank_pairwise(q, cands, docs, ReverseBackend(), retry=NO_SLEEP)
        assert out.doc_ids == cands.doc_ids

    def test_tournament_transitive_matches_win_counts(self):
        q, cands, docs = make_fixture(3)
        grades = {("q1", "d1"): 3, ("q1", "d2"): 2, ("q1", "d3"): 1}
        out = rerank_pairwise(q, cands, docs, OracleBackend(grades),
                              retry=NO_SLEEP, tournament=True)
        assert out.doc_ids == ("d1", "d2", "d3")

    def test_tournament_reversed_grades(self):
        q, cands, docs = make_fixture(3)
        grades = {("q1", "d1"): 0, ("q1", "d2"): 1, ("q1", "d3"): 2}
        out = rerank_pairwise(q, cands, docs, OracleBackend(grades),
                              retry=NO_SLEEP, tournament=True)
        assert out.doc_ids == ("d3", "d2", "d1")


class TestRerankMany:
    def test_results_in_query_order_with_failures_reported(self):
        q1, c1, docs = make_fixture(3, "q1")
        q2, c2, d2 = make_fixture(3, "q2")
        docs.update(d2)
        lists = {"q1": c1, "q2": CandidateList("q2", ("d1", "missing"))}
        results, failed = rerank_many([q1, q2], lists, docs, IdentityBackend(),
                                      retry=NO_SLEEP)
        assert [r.query_id for r in results] == ["q1"]
        assert failed == ["q2"]

    def test_parallel_matches_serial(self):
        docs = {}
        queries = []
        lists = {}
        for i in range(6):
            q, c, d = make_fixture(10, f"q{i}")
            docs.update(d)
            queries.append(q)
            lists[q.id] = c
        grades = {(f"q{i}", f"d{j}"): j for i in range(6) for j in range(1, 11)}
        serial, _ = rerank_many(queries, lists, docs, OracleBackend(grades),
                                window=WindowConfig(4, 2), retry=NO_SLEEP, parallelism=1)
        parallel, _ = rerank_many(queries, lists, docs, OracleBackend(grades),
                                  window=WindowConfig(4, 2), retry=NO_SLEEP, parallelism=4)
        assert [r.doc_ids for r in serial] == [r.doc_ids for r in parallel]
