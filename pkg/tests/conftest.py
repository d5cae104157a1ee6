import numpy as np
import pytest

import profilerank as pr


@pytest.fixture(scope="session")
def stemcell_conditions():
    return pr.read_conditions_csv(pr.bundled_data_path("conditions_stemcell.csv"))


@pytest.fixture(scope="session")
def stemcell_design(stemcell_conditions):
    return pr.read_design_csv(
        pr.bundled_data_path("design_stemcell.csv"), stemcell_conditions
    )


@pytest.fixture(scope="session")
def stemcell_xstar(stemcell_design):
    return pr.build_comparison_matrix(stemcell_design)


@pytest.fixture(scope="session")
def pluripotent():
    return pr.validate_profile(pr.bundled_profile("pluripotent"))


@pytest.fixture(scope="session")
def stemcell_model(stemcell_xstar, pluripotent):
    return pr.compose_model_matrix(stemcell_xstar, pluripotent)


@pytest.fixture(scope="session")
def analysis_profile(pluripotent):
    # Margins of the primary analysis: equivalence within 1, second
    # positivity criterion raised to 1.5.
    return pluripotent.with_margins(deltas={"day6_vs_day9": 1.5})


def random_expression(design, model, gammas, sigmas, seed, gene_ids=None):
    """Noise around model.x @ gamma for each (gamma, sigma) pair."""
    rng = np.random.default_rng(seed)
    gammas = np.asarray(gammas, dtype=float)
    n = len(gammas)
    values = gammas @ model.x.T + rng.normal(
        0.0, 1.0, (n, model.n_arrays)
    ) * np.asarray(sigmas, dtype=float)[:, None]
    if gene_ids is None:
        gene_ids = tuple(f"g{i:04d}" for i in range(n))
    return pr.ExpressionMatrix(
        gene_ids=tuple(gene_ids), array_ids=design.array_ids, values=values
    )
