import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covmatch import (
    Channel,
    CovariateSpace,
    Distribution,
    DomainError,
    ModelError,
    UndefinedPosteriorError,
    binomial_pmf,
    output_marginal,
    posterior,
)

FM = CovariateSpace(["F", "M"])


def flip(e):
    return Channel(FM, [[1 - e, e], [e, 1 - e]])


@st.composite
def prior_and_channel(draw, max_m=4):
    m = draw(st.integers(1, max_m))
    space = CovariateSpace([f"l{i}" for i in range(m)])
    weights = st.lists(st.floats(0.0, 1.0), min_size=m, max_size=m).filter(lambda w: sum(w) > 1e-3)
    p = np.array(draw(weights))
    rows = np.array([draw(weights) for _ in range(m)])
    return (
        Distribution(space, p / p.sum()),
        Channel(space, rows / rows.sum(axis=1, keepdims=True)),
    )


class TestTypes:
    def test_space_rejects_duplicates_and_empty(self):
        with pytest.raises(ModelError):
            CovariateSpace(["a", "a"])
        with pytest.raises(ModelError):
            CovariateSpace([])

    def test_distribution_tolerance_and_renormalization(self):
        d = Distribution(FM, [0.3333333333, 0.6666666667])
        assert math.fsum(d.probs) == pytest.approx(1.0, abs=1e-15)
        with pytest.raises(ModelError, match="sums to"):
            Distribution(FM, [0.5, 0.6])
        with pytest.raises(ModelError):
            Distribution(FM, [1.5, -0.5])

    def test_channel_rows(self):
        with pytest.raises(ModelError, match="row 'M'"):
            Channel(FM, [[1.0, 0.0], [0.3, 0.3]])
        with pytest.raises(ModelError, match="shape"):
            Channel(FM, [[1.0, 0.0]])

    def test_immutable(self):
        d = Distribution.uniform(FM)
        with pytest.raises(ValueError):
            d.probs[0] = 1.0


class TestOutputMarginal:
    def test_identity(self):
        out = output_marginal(Distribution.uniform(FM), Channel.identity(FM))
        np.testing.assert_array_equal(out.probs, [0.5, 0.5])

    @pytest.mark.parametrize("e", [0.0, 0.1, 0.37, 1.0])
    def test_uniform_through_symmetric_channel(self, e):
        out = output_marginal(Distribution.uniform(FM), flip(e))
        np.testing.assert_allclose(out.probs, [0.5, 0.5], atol=1e-15)

    def test_skewed_prior(self):
        out = output_marginal(Distribution(FM, [0.8, 0.2]), flip(0.1))
        # 0.8*0.9 + 0.2*0.1, 0.8*0.1 + 0.2*0.9
        np.testing.assert_allclose(out.probs, [0.74, 0.26], atol=1e-15)

    def test_space_mismatch(self):
        other = CovariateSpace(["x", "y"])
        with pytest.raises(ModelError, match="mismatch"):
            output_marginal(Distribution.uniform(FM), Channel.identity(other))


class TestPosterior:
    def test_noiseless(self):
        prior = Distribution(FM, [0.3, 0.7])
        post = posterior(prior, Channel.identity(FM), "M")
        np.testing.assert_array_equal(post.probs, [0.0, 1.0])

    def test_uniform_prior_flip(self):
        post = posterior(Distribution.uniform(FM), flip(0.1), "F")
        np.testing.assert_allclose(post.probs, [0.9, 0.1], atol=1e-15)

    def test_skewed_prior_flip(self):
        post = posterior(Distribution(FM, [0.8, 0.2]), flip(0.1), "M")
        np.testing.assert_allclose(post.probs, [0.08 / 0.26, 0.18 / 0.26], atol=1e-15)
        assert post["F"] == pytest.approx(0.3077, abs=1e-4)

    def test_zero_marginal_raises(self):
        with pytest.raises(UndefinedPosteriorError) as info:
            posterior(Distribution(FM, [1.0, 0.0]), Channel.identity(FM), "M")
        assert info.value.label == "M"
        assert info.value.marginal == 0.0


class TestBinomial:
    def test_examples(self):
        assert binomial_pmf(0, 0, 0.0) == 1.0
        assert binomial_pmf(7, 0, 0.0) == 1.0
        assert binomial_pmf(3, 1, 0.5) == pytest.approx(0.375, abs=1e-15)
        assert binomial_pmf(5, 5, 1.0) == 1.0

    def test_domain(self):
        with pytest.raises(DomainError):
            binomial_pmf(3, 4, 0.5)
        with pytest.raises(DomainError):
            binomial_pmf(3, 1, 1.5)

    def test_against_exact_comb(self):
        for n, k, p in [(10, 3, 0.2), (50, 25, 0.5), (200, 7, 0.01)]:
            exact = math.comb(n, k) * p**k * (1 - p) ** (n - k)
            assert binomial_pmf(n, k, p) == pytest.approx(exact, rel=1e-11)

    def test_large_n_is_finite(self):
        v = binomial_pmf(10_000, 5_000, 0.5)
        assert 0 < v < 1
        assert v == pytest.approx(math.sqrt(2 / (math.pi * 10_000)), rel=1e-4)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 1000), st.floats(0.0, 1.0))
    def test_normalization(self, n, p):
        total = math.fsum(binomial_pmf(n, k, p) for k in range(n + 1))
        assert total == pytest.approx(1.0, abs=1e-10)


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(prior_and_channel())
    def test_marginal_total(self, pc):
        prior, channel = pc
        assert math.fsum(output_marginal(prior, channel).probs) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(prior_and_channel())
    def test_bayes_consistency(self, pc):
        prior, channel = pc
        marg = output_marginal(prior, channel)
        for o in range(prior.space.size):
            if marg.probs[o] <= 0:
                continue
            post = posterior(prior, channel, o)
            assert math.fsum(post.probs) == pytest.approx(1.0, abs=1e-12)
            np.testing.assert_allclose(
                prior.probs * channel.matrix[:, o], post.probs * marg.probs[o], atol=1e-12
            )

    @settings(max_examples=50, deadline=None)
    @given(prior_and_channel())
    def test_identity_chain(self, pc):
        prior, _ = pc
        ident = Channel.identity(prior.space)
        out = output_marginal(prior, ident.then(ident))
        np.testing.assert_allclose(out.probs, prior.probs, rtol=0, atol=1e-15)
