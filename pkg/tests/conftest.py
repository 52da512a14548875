import pytest

from cyberinvest import (
    BreachFamily,
    BreachModel,
    CostParams,
    HawkesParams,
    SolverGrid,
    simulate_paths,
    solve,
    solve_poisson,
)
from cyberinvest.config import COARSE_PRESET
from cyberinvest.poisson import lambda_baseline, lambda_expectation_matched


@pytest.fixture(scope="session")
def std_hawkes():
    return HawkesParams(alpha=27.0, lambda0=27.0, xi=15.0, beta=9.0)


@pytest.fixture(scope="session")
def std_model():
    return BreachModel(BreachFamily.CLASS_I, v=0.65, a=0.1, b=1.0)


@pytest.fixture(scope="session")
def std_costs():
    return CostParams(gamma=0.05, eta_mean=10.0, eta_var=10.0, rho=0.2, horizon=1.0)


@pytest.fixture(scope="session")
def coarse_grid(std_costs):
    return SolverGrid.regular(
        27.0,
        COARSE_PRESET["lambda_max"],
        COARSE_PRESET["d_lambda"],
        0.0,
        50.0,
        COARSE_PRESET["d_h"],
        std_costs.horizon,
        200,
    )


@pytest.fixture(scope="session")
def coarse_solution(coarse_grid, std_hawkes, std_model, std_costs):
    """Desk-scale solve on the wide intensity domain; shared by many tests."""
    return solve(coarse_grid, std_hawkes, std_model, std_costs)


@pytest.fixture(scope="session")
def narrow_family(std_hawkes, std_model, std_costs):
    """Three refinement levels on a fixed narrow domain.

    Keeping lambda_max fixed makes the domain-truncation error identical
    across levels, so level differences isolate the mesh error.
    """
    out = {}
    for factor in (1, 2, 4):
        grid = SolverGrid.regular(27.0, 120.0, 3.0 / factor, 0.0, 50.0, 1.0 / factor, 1.0, 200)
        out[factor] = solve(grid, std_hawkes, std_model, std_costs)
    return out


@pytest.fixture(scope="session")
def poisson_pair(coarse_grid, std_hawkes, std_model, std_costs):
    """Benchmark fields for both constant-intensity choices."""
    pb = solve_poisson(coarse_grid, lambda_baseline(std_hawkes), std_model, std_costs)
    pe = solve_poisson(
        coarse_grid, lambda_expectation_matched(std_hawkes, std_costs.horizon), std_model, std_costs
    )
    return pb, pe


@pytest.fixture(scope="session")
def std_batch_100k(std_hawkes):
    return simulate_paths(std_hawkes, 1.0, 100_000, seed=0)
