import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqc.despec import (
    Binary,
    ChebyshevNodes,
    Constant,
    Derivative,
    DerivativeOrderError,
    Equidistant,
    Function,
    ParseError,
    ProblemSpec,
    RandomUniform,
    Unary,
    UnknownIdentifierError,
    VariableX,
    dense_grid,
    eval_ast,
    eval_with_partials,
    make_grid,
    parse_residual,
    referenced,
    to_text,
)
from dqc.errors import ConfigurationError, LogicError, NumericError
from dqc.oracle import analytic_damped, analytic_damped_dx

DAMPED = "df1/dx + 8*f1*(0.1 + tan(8*x))"
NONTRIVIAL = "df1/dx - 4*f1 + 6*f1^2 - sin(50*x) - f1*cos(25*x) + 0.5"
NAMES = ["f1", "f2"]


def bind(*triples):
    return {k: t for k, t in enumerate(triples)}


class TestParser:
    def test_damped_structure(self):
        ast = parse_residual(DAMPED, ["f1"])
        inner = Binary("+", Constant(0.1), Unary("tan", Binary("*", Constant(8.0), VariableX())))
        assert ast == Binary("+", Derivative(0, 1), Binary("*", Binary("*", Constant(8.0), Function(0)), inner))

    def test_nontrivial_references(self):
        ast = parse_residual(NONTRIVIAL, ["f1"])
        assert referenced(ast) == {(0, 0), (0, 1)}
        u, du, x = 0.4, -1.3, 0.21
        direct = du - 4 * u + 6 * u * u - math.sin(50 * x) - u * math.cos(25 * x) + 0.5
        assert eval_ast(ast, bind((u, du, None)), x) == pytest.approx(direct, abs=1e-15)

    def test_truncated_derivative(self):
        with pytest.raises(ParseError) as e:
            parse_residual("df1/", ["f1"])
        assert e.value.offset == 4

    def test_order_three(self):
        with pytest.raises(DerivativeOrderError):
            parse_residual("d3f1/dx3 + f1", ["f1"])

    def test_unknown_identifier(self):
        with pytest.raises(UnknownIdentifierError) as e:
            parse_residual("f1 + g", ["f1"])
        assert e.value.offset == 5

    def test_second_derivative_token(self):
        assert parse_residual("d2f2/dx2", NAMES) == Derivative(1, 2)

    def test_power_binds_tighter_than_minus(self):
        assert parse_residual("-x^2", ["f1"]) == Unary("neg", Binary("^", VariableX(), Constant(2.0)))

    def test_exponent_must_be_constant(self):
        with pytest.raises(ParseError):
            parse_residual("f1^x", ["f1"])

    def test_empty(self):
        with pytest.raises(ParseError):
            parse_residual("  ", ["f1"])

    def test_call_needs_parentheses(self):
        with pytest.raises(ParseError):
            parse_residual("sin x", ["f1"])

    def test_auxiliary_inlined(self):
        ast = parse_residual("du/dx - u*g", ["u"], {"g": "2*x"})
        assert eval_ast(ast, bind((3.0, 1.0, None)), 0.5) == pytest.approx(1.0 - 3.0)

    def test_auxiliary_must_be_x_only(self):
        with pytest.raises(ConfigurationError):
            parse_residual("du/dx", ["u"], {"g": "u*x"})


def _ast_strategy():
    leaves = st.one_of(
        st.floats(0, 50, allow_nan=False).map(Constant),
        st.just(VariableX()),
        st.sampled_from([0, 1]).map(Function),
        st.tuples(st.sampled_from([0, 1]), st.sampled_from([1, 2])).map(lambda t: Derivative(*t)),
    )

    def grow(children):
        return st.one_of(
            st.tuples(st.sampled_from(["neg", "sin", "cos", "tan", "exp", "ln", "sqrt"]), children)
            .map(lambda t: Unary(*t)),
            st.tuples(st.sampled_from(["+", "-", "*", "/"]), children, children).map(lambda t: Binary(*t)),
            st.tuples(children, st.integers(-3, 4)).map(lambda t: Binary("^", t[0], Constant(float(t[1])))),
        )

    return st.recursive(leaves, grow, max_leaves=12)


class TestRoundTrip:
    @given(_ast_strategy())
    def test_print_parse_fixed_point(self, ast):
        assert parse_residual(to_text(ast, NAMES), NAMES) == ast

    @pytest.mark.parametrize("text", [
        DAMPED, NONTRIVIAL, "du1/dx - 5*u2 - 3*u1",
        "(T - V^2)*drho/dx - rho*V^2*(19.8*(2*x - 1)/(1 + 4.95*(2*x - 1)^2))",
    ])
    def test_experiment_residuals(self, text):
        names = ["f1"] if "f1" in text else (["u1", "u2"] if "u1" in text else ["rho", "T", "V"])
        ast = parse_residual(text, names)
        assert parse_residual(to_text(ast, names), names) == ast


class TestEval:
    def test_constant(self):
        assert eval_ast(Constant(2.0), {}, 0.3) == 2.0

    def test_square(self):
        assert eval_ast(parse_residual("f1^2", ["f1"]), bind((0.5, None, None)), 0.0) == 0.25

    def test_damped_exact_solution(self):
        ast = parse_residual(DAMPED, ["f1"])
        x = 0.37
        val = eval_ast(ast, bind((analytic_damped(x), float(analytic_damped_dx(x)), None)), x)
        assert abs(val) < 1e-9

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
    def test_polynomial_exact(self, u, du, x):
        ast = parse_residual("3*f1^3 - f1*df1/dx + x^2 - 0.5*x*f1", ["f1"])
        direct = 3 * u ** 3 - u * du + x ** 2 - 0.5 * x * u
        assert eval_ast(ast, bind((u, du, None)), x) == pytest.approx(direct, abs=1e-14 * max(1.0, abs(direct)))

    def test_division_by_zero_tagged(self):
        ast = parse_residual("1/(x - 0.5)", ["f1"])
        with pytest.raises(NumericError) as e:
            eval_ast(ast, {}, np.array([0.1, 0.5, 0.7]))
        assert e.value.x == 0.5

    def test_log_of_non_positive(self):
        with pytest.raises(NumericError):
            eval_ast(parse_residual("ln(f1)", ["f1"]), bind((-1.0, None, None)), 0.2)

    def test_missing_binding(self):
        with pytest.raises(LogicError):
            eval_ast(parse_residual("df1/dx + f1", ["f1"]), bind((1.0, None, None)), 0.1)

    def test_vectorized(self):
        ast = parse_residual("df1/dx + f1*x", ["f1"])
        xs = np.linspace(0, 1, 5)
        u = np.stack([np.ones(5), np.full(5, 2.0), np.zeros(5)])[None]
        np.testing.assert_allclose(eval_ast(ast, u, xs), 2.0 + xs)

    def test_partials_match_fd(self):
        ast = parse_residual("sin(f1)*df1/dx + exp(f2)/(1 + f1^2) - sqrt(d2f2/dx2)", NAMES)
        rng = np.random.default_rng(1)
        u = rng.uniform(0.2, 1.0, size=(2, 3, 4))
        xs = np.linspace(0, 1, 4)
        _, part = eval_with_partials(ast, xs, u)
        h = 1e-6
        for k in range(2):
            for r in range(3):
                up, um = u.copy(), u.copy()
                up[k, r] += h
                um[k, r] -= h
                fd = (eval_ast(ast, up, xs) - eval_ast(ast, um, xs)) / (2 * h)
                np.testing.assert_allclose(part[k, r], fd, atol=1e-8)


class TestGrids:
    def test_equidistant(self):
        g = make_grid(Equidistant(20, ((0.0, 0.9),)))
        assert g[0] == 0.0 and g[-1] == 0.9 and g.size == 20
        assert np.allclose(np.diff(g), 0.9 / 19, atol=1e-15)

    def test_chebyshev_pair(self):
        np.testing.assert_allclose(make_grid(ChebyshevNodes(2, ((-1.0, 1.0),))),
                                   [-math.sqrt(2) / 2, math.sqrt(2) / 2], atol=1e-15)

    def test_random_reproducible(self):
        spec = RandomUniform(10, ((0.0, 0.9),), seed=4)
        np.testing.assert_array_equal(make_grid(spec), make_grid(spec))
        assert not np.array_equal(make_grid(spec), make_grid(RandomUniform(10, ((0.0, 0.9),), seed=5)))

    def test_zero_points(self):
        with pytest.raises(ConfigurationError):
            make_grid(Equidistant(0))

    def test_degenerate_interval(self):
        with pytest.raises(ConfigurationError):
            Equidistant(5, ((0.5, 0.5),))

    def test_overlapping_union(self):
        with pytest.raises(ConfigurationError):
            Equidistant(5, ((0.0, 0.5), (0.4, 0.9)))

    def test_union_counts_per_interval(self):
        g = make_grid(Equidistant(20, ((0.0, 0.4), (0.6, 0.9))))
        assert g.size == 40 and not np.any((g > 0.4) & (g < 0.6))

    def test_open_grid_interior(self):
        np.testing.assert_allclose(make_grid(Equidistant(5, ((0.6, 0.9),), open=True)),
                                   [0.65, 0.7, 0.75, 0.8, 0.85], atol=1e-15)

    def test_dense_factor(self):
        spec = Equidistant(20, ((0.0, 0.9),))
        assert dense_grid(spec).size == 80

    @given(st.integers(1, 50), st.floats(-5, 5), st.floats(0.01, 5))
    def test_sorted_inside(self, m, a, w):
        for spec in (Equidistant(m, ((a, a + w),)), ChebyshevNodes(m, ((a, a + w),)),
                     RandomUniform(m, ((a, a + w),), seed=m)):
            g = make_grid(spec)
            assert g.size == m and np.all(np.diff(g) >= 0)
            assert g.min() >= a - 1e-12 and g.max() <= a + w + 1e-12


class TestProblem:
    grid = Equidistant(5, ((0.0, 0.9),))

    def test_from_text(self):
        p = ProblemSpec.from_text(["u"], ["du/dx + u"], boundary=[("u", 0.0, 1.0)], grid=self.grid,
                                  domain=(0.0, 0.9))
        assert p.n_functions == 1 and p.max_order() == 1
        assert p.anchors_for(0)[0].u0 == 1.0

    def test_needs_residual(self):
        with pytest.raises(ConfigurationError):
            ProblemSpec.from_text(["u"], [], grid=self.grid)

    def test_unused_function(self):
        with pytest.raises(ConfigurationError, match="v"):
            ProblemSpec.from_text(["u", "v"], ["du/dx + u"], grid=self.grid)

    def test_grid_outside_domain(self):
        with pytest.raises(ConfigurationError):
            ProblemSpec.from_text(["u"], ["du/dx"], grid=Equidistant(5, ((0.0, 2.0),)), domain=(0.0, 1.0))

    def test_unknown_boundary_function(self):
        with pytest.raises(ConfigurationError):
            ProblemSpec.from_text(["u"], ["du/dx"], boundary=[("w", 0.0, 1.0)], grid=self.grid)
