import sys
import os
import pytest

# Add the project root directory to the Python path.
# This allows tests to import modules from the 'src' directory, even when running from the 'tests' folder.
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

# Tests read the small grid unless pytest-env already points elsewhere.
os.environ.setdefault("CHARLIER_CONFIG_PATH", os.path.join("src", "config_pytest.json"))


@pytest.fixture
def params_2():
    """N=2, a=1, lambda=0: the model behind most worked examples."""
    from src.matrix_core import build_params
    return build_params(2, 1.0, 0)


@pytest.fixture
def params_3():
    """N=3, a=2.5, lambda=1."""
    from src.matrix_core import build_params
    return build_params(3, 2.5, 1)


@pytest.fixture(params=[(2, 1.0, 1), (3, 0.5, 0), (3, 2.5, 3)], ids=lambda v: f"N{v[0]}-a{v[1]}-l{v[2]}")
def grid_params(request):
    from src.matrix_core import build_params
    return build_params(*request.param)


@pytest.fixture
def truncation():
    from src.data_models import Truncation
    return Truncation(eps=1e-14, max_terms=400)
