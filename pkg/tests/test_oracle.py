import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqc.errors import ConfigurationError, NumericError
from dqc.oracle import (
    NozzleProblem,
    ReferenceSolution,
    analytic_coupled,
    analytic_damped,
    analytic_damped_dx,
    isentropic_mach,
    nozzle_reference_residuals,
    nozzle_steady_reference,
    rhs_system,
    rk4_integrate,
)

NONTRIVIAL_RHS = "4*u - 6*u^2 + sin(50*x) + u*cos(25*x) - 0.5"


class TestDamped:
    @given(lam=st.floats(1, 30), kappa=st.floats(0, 1))
    def test_origin(self, lam, kappa):
        assert analytic_damped(0.0, lam, kappa) == 1.0

    def test_cosine_zero(self):
        assert analytic_damped(math.pi / 16) == pytest.approx(0.0, abs=1e-16)

    def test_constant_offset(self):
        assert analytic_damped(0.3, u0=2.5) == pytest.approx(analytic_damped(0.3) + 1.5, abs=1e-15)

    @pytest.mark.parametrize("lam", [8.0, 20.0])
    def test_satisfies_ode(self, lam):
        xs = np.random.default_rng(0).uniform(0, 0.9, size=100)
        xs = xs[np.abs(np.cos(lam * xs)) > 1e-3]  # tan poles
        u, du = analytic_damped(xs, lam), analytic_damped_dx(xs, lam)
        res = du + lam * u * (0.1 + np.tan(lam * xs))
        assert np.abs(res).max() < 1e-10


class TestCoupled:
    def test_origin(self):
        assert analytic_coupled(0.0) == (0.5, 0.0)

    def test_quarter_period(self):
        u1, u2 = analytic_coupled(math.pi / 8)
        assert (u1, u2) == (pytest.approx(0.375, abs=1e-14), pytest.approx(-0.625, abs=1e-14))

    def test_quadratic_invariant(self):
        u1, u2 = analytic_coupled(np.linspace(0, 0.9, 50))
        q = u1 ** 2 + u2 ** 2 + 2 * (3 / 5) * u1 * u2
        assert np.ptp(q) < 1e-9

    def test_against_rk4(self):
        xs = np.linspace(0, 0.9, 31)
        g = lambda u, x: np.array([5 * u[1] + 3 * u[0], -3 * u[1] - 5 * u[0]])  # noqa: E731
        ref = rk4_integrate(g, [0.5, 0.0], xs, max_step=0.9e-4)
        u1, u2 = analytic_coupled(xs)
        assert max(np.abs(ref.column(0) - u1).max(), np.abs(ref.column(1) - u2).max()) < 1e-8


class TestRK4:
    def test_constant(self):
        ref = rk4_integrate(lambda u, x: 0.0 * u, [1.0], [0.0, 0.5, 0.9])
        np.testing.assert_array_equal(ref.column(0), 1.0)

    def test_exponential(self):
        ref = rk4_integrate(lambda u, x: u, [1.0], [0.0, 1.0])
        assert abs(ref.column(0)[-1] - math.e) < 1e-10

    def test_fourth_order(self):
        err = [abs(rk4_integrate(lambda u, x: u, [1.0], [1.0], x0=0.0, max_step=h).column(0)[0] - math.e)
               for h in (0.1, 0.05)]
        assert 14 < err[0] / err[1] < 17

    def test_nontrivial_frozen(self):
        g = rhs_system([NONTRIVIAL_RHS], ["u"])
        ref = rk4_integrate(g, [0.75], [0.3, 0.6, 0.9], x0=0.0)
        np.testing.assert_allclose(ref.column(0), [0.6463538877296793, 0.5589356638759959, 0.5045513568581949],
                                   rtol=0, atol=1e-12)
        half = rk4_integrate(g, [0.75], [0.3, 0.6, 0.9], x0=0.0, max_step=5e-5)
        assert np.abs(ref.column(0) - half.column(0)).max() < 1e-8

    def test_blowup_reports_location(self):
        with pytest.raises(NumericError) as e, np.errstate(over="ignore", invalid="ignore"):
            rk4_integrate(lambda u, x: u ** 2, [1.0], [2.0], x0=0.0, max_step=1e-3)
        assert 0.9 < e.value.x < 2.0

    def test_backwards_rejected(self):
        with pytest.raises(ConfigurationError):
            rk4_integrate(lambda u, x: u, [1.0], [0.1], x0=0.5)

    def test_rhs_without_derivatives(self):
        with pytest.raises(ConfigurationError):
            rhs_system(["du/dx"], ["u"])


class TestReferenceSolution:
    def test_csv_round_trip(self, tmp_path):
        ref = ReferenceSolution(np.array([0.0, 0.25, 0.5]), {"u": np.array([1.0, 0.1, -1 / 3])}, "analytic")
        path = tmp_path / "ref.csv"
        ref.to_csv(path)
        assert path.read_text().splitlines()[0] == "# provenance: analytic"
        back = ReferenceSolution.from_csv(path)
        assert back.provenance == "analytic" and back.names == ["u"]
        np.testing.assert_array_equal(back.column(0), ref.column(0))

    def test_unsorted_grid(self):
        with pytest.raises(ConfigurationError):
            ReferenceSolution(np.array([0.5, 0.1]), {"u": np.zeros(2)}, "rk4")

    def test_non_finite(self):
        with pytest.raises(NumericError):
            ReferenceSolution(np.array([0.0, 0.1]), {"u": np.array([0.0, np.nan])}, "rk4")

    def test_unknown_provenance(self):
        with pytest.raises(ConfigurationError):
            ReferenceSolution(np.array([0.0]), {"u": np.zeros(1)}, "guess")


@pytest.fixture(scope="module")
def steady():
    return nozzle_steady_reference(NozzleProblem(), np.linspace(0, 1, 201))


class TestNozzle:
    p = NozzleProblem()

    def test_area(self):
        assert self.p.area(0.5) == 1.0
        assert self.p.area(0.0) == pytest.approx(5.95, abs=1e-14)
        xs = np.linspace(0, 1, 101)
        assert np.all(self.p.area(xs) >= 1.0)

    def test_dlna_matches_fd(self):
        xs = np.linspace(0.05, 0.95, 10)
        h = 1e-6
        fd = (np.log(self.p.area(xs + h)) - np.log(self.p.area(xs - h))) / (2 * h)
        np.testing.assert_allclose(self.p.dlnA(xs), fd, rtol=1e-7, atol=1e-8)

    def test_monotone(self, steady):
        assert np.all(np.diff(steady.values["rho"]) < 0)
        assert np.all(np.diff(steady.values["T"]) < 0)
        assert np.all(np.diff(steady.values["V"]) > 0)

    def test_stationary_residual_away_from_throat(self, steady):
        xs = np.linspace(0, 1, 201)
        xs = xs[(xs <= 0.4) | (xs >= 0.6)]
        assert np.abs(nozzle_reference_residuals(self.p, steady, xs)).max() < 1e-5

    def test_isentropic_mach(self, steady):
        # inflow and outflow Mach numbers follow from the area ratio alone
        mach = steady.values["V"] / np.sqrt(steady.values["T"])
        assert mach[0] == pytest.approx(isentropic_mach(5.95, supersonic=False), abs=1e-6)
        assert mach[180] == pytest.approx(isentropic_mach(float(self.p.area(0.9)), supersonic=True), abs=1e-6)

    def test_frozen_values(self):
        ref = nozzle_steady_reference(self.p, np.array([0.2, 0.5, 0.8]))
        np.testing.assert_allclose(ref.values["rho"], [0.9821945963735619, 0.6369755350419025, 0.124167295355033],
                                   atol=1e-9)
        np.testing.assert_allclose(ref.values["T"], [0.992839429138138, 0.8349281441270922, 0.434113097311156],
                                   atol=1e-9)
        np.testing.assert_allclose(ref.values["V"], [0.21300639200159474, 0.9137440241890471, 1.6849342335939876],
                                   atol=1e-9)
        assert ref.provenance == "time-marched"

    def test_grid_outside(self):
        with pytest.raises(ConfigurationError):
            nozzle_steady_reference(self.p, np.array([0.5, 1.2]))
