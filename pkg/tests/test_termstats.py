import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from litscape import termstats
from litscape.termstats import TermStatsError

from oracles import chi_square_oracle


def random_tables(count, seed=0):
    rng = np.random.default_rng(seed)
    made = 0
    while made < count:
        r, c = rng.integers(2, 7, size=2)
        t = rng.integers(0, rng.choice([5, 30, 200]), size=(r, c))
        if t.sum(0).all() and t.sum(1).all():
            made += 1
            yield t


# tokenize

@pytest.mark.parametrize("text, tokens", [
    ("Life-cycle Assessment of LCA", ["life-cycle", "assessment", "lca"]),
    ("", []),
    ("the and of", []),
    ("CO2 x-ray a b 42", ["co2", "x-ray", "42"]),
])
def test_tokenize(text, tokens):
    assert termstats.tokenize(text) == tokens


# TF-IDF

TOY = ["solar energy storage", "solar panel", "wind energy"]


def test_toy_tfidf_hand_values():
    scores = {s.term: s.score for s in termstats.tfidf_cluster_terms(TOY[:2], TOY, top_n=99)}
    idf2 = math.log(4 / 3) + 1
    idf1 = math.log(2) + 1
    expected = {
        "solar": (1 / 3 + 1 / 2) * idf2 / 2,
        "energy": (1 / 3) * idf2 / 2,
        "storage": (1 / 3) * idf1 / 2,
        "panel": (1 / 2) * idf1 / 2,
    }
    assert scores.keys() == expected.keys()
    for term, value in expected.items():
        assert abs(scores[term] - value) <= 1e-12
    assert "wind" not in scores


def test_toy_ranking_and_truncation():
    ranked = [s.term for s in termstats.tfidf_cluster_terms(TOY[:2], TOY, top_n=99)]
    assert ranked == ["solar", "panel", "storage", "energy"]
    assert [s.term for s in termstats.tfidf_cluster_terms(TOY[:2], TOY, top_n=2)] == ["solar", "panel"]


def test_idf_floor():
    assert termstats.idf(5, 5) == 1.0


def test_ties_sort_alphabetically():
    scores = termstats.tfidf_scores([["beta", "alpha"]], [["beta", "alpha"]])
    assert [s.term for s in scores] == ["alpha", "beta"] and scores[0].score == scores[1].score


def test_empty_cluster_rejected():
    with pytest.raises(TermStatsError):
        termstats.tfidf_scores([], [["a"]])


def test_ranking_invariant_under_corpus_duplication():
    corpus = ["solar energy storage solar", "solar panel efficiency", "wind energy turbine", "battery storage"]
    once = [s.term for s in termstats.tfidf_cluster_terms(corpus[:2], corpus, 99)]
    twice = [s.term for s in termstats.tfidf_cluster_terms(corpus[:2] * 2, corpus * 2, 99)]
    assert once == twice


# phrases

def test_phrases_from_example_sentence():
    got = termstats.phrase_terms("the carbon emissions of recycled aggregates")
    assert "carbon emissions" in got and "recycled aggregates" in got
    assert all(not p.startswith(("the ", "of ")) and not p.endswith(" of") for p in got)


def test_phrase_length_bounds():
    assert termstats.phrase_terms("solar") == []
    got = termstats.phrase_terms("deep neural network surrogate model training")
    assert max(len(p.split()) for p in got) == 4 and min(len(p.split()) for p in got) == 2


def test_phrase_never_crosses_sentence_period():
    got = termstats.phrase_terms("We measured concrete. Strength tests followed")
    assert "concrete strength" not in got and "strength tests" in got


def test_generic_phrases_blocked():
    got = termstats.phrase_terms("a life cycle assessment of timber frames")
    assert not any("life cycle" in p for p in got) and "timber frames" in got


def test_extract_phrases_counts():
    cands = termstats.extract_phrases(["carbon emissions rise", "carbon emissions fall", "carbon capture"])
    top = cands[0]
    assert (top.phrase, top.count, top.doc_freq) == ("carbon emissions", 2, 2)


def test_phrase_tfidf():
    texts = ["carbon emissions of recycled aggregates", "recycled aggregates in concrete", "solar panel output"]
    ranked = termstats.tfidf_cluster_phrases(texts[:2], texts, top_n=3)
    assert ranked[0].term == "recycled aggregates"


# chi-square

def test_chi_square_known_table():
    stat, dof, p = termstats.chi_square([[10, 20], [30, 40]])
    assert abs(stat - 0.79365) <= 1e-5 and dof == 1
    # E = [[12, 18], [28, 42]]
    assert stat == pytest.approx(4 / 12 + 4 / 18 + 4 / 28 + 4 / 42, abs=1e-12)


def test_chi_square_proportional_table():
    stat, dof, p = termstats.chi_square([[1, 2], [2, 4], [3, 6]])
    assert stat == pytest.approx(0.0, abs=1e-12) and dof == 2 and p == pytest.approx(1.0)


def test_chi_square_errors():
    for bad in ([[0, 0], [1, 2]], [[1, -1], [2, 3]], [], [[0]]):
        with pytest.raises(TermStatsError):
            termstats.chi_square(bad)


def test_chi_square_against_oracle():
    for table in random_tables(150, seed=3):
        stat, dof, p = termstats.chi_square(table)
        o_stat, o_dof, o_p = chi_square_oracle(table)
        assert dof == o_dof
        assert abs(stat - o_stat) <= 1e-9 * max(1.0, o_stat)
        assert abs(p - o_p) <= 1e-9


@pytest.mark.parametrize("a, x", [(0.5, 1e-3), (0.5, 30.0), (3.0, 3.5), (12.5, 4.0), (12.5, 40.0), (1.0, 2.0)])
def test_gamma_q_against_closed_forms(a, x):
    import mpmath

    assert termstats.gamma_q(a, x) == pytest.approx(float(mpmath.gammainc(a, x, mpmath.inf, regularized=True)),
                                                    abs=1e-12)


def test_gamma_q_domain():
    assert termstats.gamma_q(2.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        termstats.gamma_q(0.0, 1.0)
    with pytest.raises(ValueError):
        termstats.gamma_q(1.0, -1.0)


# specificity

def test_specificity_partition_exclusive_term_scores_highest():
    units = [({"solar", "panel"}, "A"), ({"solar", "wind"}, "A"), ({"wind"}, "B"), ({"panel"}, "B")]
    ranked = termstats.specificity_rank(units)
    scores = {s.term: s.score for s in ranked}
    # solar: [[2,0],[0,2]] -> chi2 = 4; panel and wind spread evenly -> 0
    assert scores["solar"] == pytest.approx(4.0)
    assert scores["panel"] == pytest.approx(0.0) and scores["wind"] == pytest.approx(0.0)
    assert ranked[0].term == "solar"


def test_specificity_tie_break_and_truncation():
    units = [({"a", "b", "c"}, "x"), ({"b"}, "x"), ({"c"}, "y"), ({"c"}, "y")]
    ranked = termstats.specificity_rank(units, max_terms=2)
    assert len(ranked) == 2
    assert ranked == sorted(ranked, key=lambda s: (-s.score, -s.frequency, s.term))


def test_specificity_row_format():
    # shape of an output row: term, frequency, rounded chi-square
    units = [({"renewable energy"}, "2015-2018")] * 3 + [(set(), "2019-2022")] * 3
    (row,) = termstats.specificity_rank(units)
    assert (row.term, row.frequency, round(row.score)) == ("renewable energy", 3, 6)


# contingency

def test_deviation_of_three_when_observed_is_four_times_expected():
    m = termstats.contingency_from_counts([[4, 0], [0, 12]], ["a1", "a2"], ["b1", "b2"])
    assert m.expected[0, 0] == 1.0
    assert m.deviation[0, 0] == 3.0
    assert m.deviation[0, 1] == -1.0 and m.deviation[1, 0] == -1.0


def test_deviation_identity_and_totals():
    O = np.array([[5, 1, 3], [2, 8, 4]])
    m = termstats.contingency_from_counts(O, ["r1", "r2"], ["c1", "c2", "c3"])
    E = np.outer(O.sum(1), O.sum(0)) / O.sum()
    assert np.array_equal(m.expected, E)
    assert np.array_equal(m.deviation, (O - E) / E)
    assert m.observed.sum() == O.sum()
    stat, dof, p = termstats.chi_square(O)
    assert (m.chi2, m.dof, m.p) == (stat, dof, p)


def test_independent_placement_not_significant():
    # every AI term appears with every LCA term in proportion: O = E everywhere
    docs = []
    for ai in ("neural network", "random forest"):
        for lca in ("concrete", "sludge"):
            docs += [f"A {ai} study of {lca}."] * 5
    m = termstats.contingency(docs, ["neural network", "random forest"], ["concrete", "sludge"])
    assert np.array_equal(m.observed, [[5, 5], [5, 5]])
    assert np.allclose(m.deviation, 0.0) and not m.significant.any()


def test_contingency_counts_documents_not_mentions():
    docs = ["neural network neural network concrete concrete", "random forest for sludge", "neural networks"]
    m = termstats.contingency(docs, ["neural network", "random forest"], ["concrete", "sludge"])
    assert m.observed.tolist() == [[1, 0], [0, 1]]
    assert m.deviation.tolist() == [[1.0, -1.0], [-1.0, 1.0]]


def test_absent_terms_reported_and_dropped():
    docs = ["neural network on concrete", "neural network on cement"]
    m = termstats.contingency(docs, ["neural network", "kriging"], ["concrete", "cement", "timber"])
    assert m.rows == ["neural network"] and m.cols == ["concrete", "cement"]
    assert set(m.dropped) == {"kriging", "timber"}
    with pytest.raises(TermStatsError):
        termstats.contingency(docs, [], ["concrete"])


def test_cell_significance_uses_two_by_two_test():
    O = np.array([[30, 2], [3, 25]])
    m = termstats.contingency_from_counts(O, ["a", "b"], ["x", "y"])
    table = [[30, 2], [3, 25]]
    assert m.cell_p[0, 0] == termstats.chi_square(table)[2]
    assert m.significant.all()


# trends

def test_trend_single_term_single_period():
    rows = termstats.trend_series([(2020, "solar panel"), (2021, "solar panel")], terms=["solar panel"])
    assert [(r.period, r.height) for r in rows] == [("2020-2023", 1.0)]


def test_trend_three_to_one():
    docs = [(2018, "neural network")] * 3 + [(2019, "random forest")]
    rows = termstats.trend_series(docs, terms=["neural network", "random forest"])
    assert [r.height for r in rows] == [0.75, 0.25]


def test_trend_bins_and_empty_periods():
    docs = [(2010, "neural network"), (2019, "neural network random forest")]
    rows = termstats.trend_series(docs, terms=["neural network", "random forest"])
    assert [r.period for r in rows] == ["2010-2013"] * 2 + ["2014-2017"] * 2 + ["2018-2021"] * 2
    assert [r.height for r in rows if r.period == "2014-2017"] == [0.0, 0.0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(2000, 2024), st.lists(st.sampled_from(
    ["neural network", "random forest", "genetic algorithm", "solar panel", "wind turbine", "plain words"]),
    min_size=1, max_size=4).map(". ".join)), min_size=1, max_size=30))
def test_trend_heights_sum_to_one(docs):
    rows = termstats.trend_series(docs, top_k=5)
    by_period = {}
    for r in rows:
        by_period.setdefault(r.period, []).append(r)
    for period_rows in by_period.values():
        total = sum(r.height for r in period_rows)
        assert total == 0.0 or abs(total - 1.0) <= 1e-12


def test_ml_terms_dominate_late_periods():
    docs = []
    for year in range(2006, 2026):
        ml = max(0, year - 2014)
        docs += [(year, "genetic algorithm optimization")] * 2
        docs += [(year, "machine learning model")] * ml
    rows = termstats.trend_series(docs, terms=["machine learning", "genetic algorithm"])
    late = [r for r in rows if r.period == "2022-2025"]
    early = [r for r in rows if r.period == "2006-2009"]
    assert late[0].term == "machine learning" and late[0].height > 0.7
    assert early[0].height == 0.0


def test_period_helpers():
    assert termstats.period_label(2019, 2010, 4) == "2018-2021"
    assert termstats.period_bins([2012, 2020]) == ["2012-2015", "2016-2019", "2020-2023"]
    assert termstats.period_bins([]) == []
