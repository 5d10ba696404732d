import numpy as np
import pytest

from jointdisp.model import Baseline, Linking, ModelSpec, Subject, VarianceModel, zero_state


def make_subject(sid="a", times=(0.0, 1.0), y=(1.0, 2.0), T=2.0, event=1, gender=0, age=0, prevoi=0):
    return Subject(id=sid, times=times, y=y, event_time=T, event=event, gender=gender, age=age, prevoi=prevoi)


def random_state(spec, N, rng):
    """A random state inside every prior's support."""
    st = zero_state(spec, N)
    st.beta1 = rng.normal(size=5)
    st.beta3 = rng.normal(scale=0.3, size=3)
    if st.beta2 is not None:
        st.beta2 = rng.normal(scale=0.3, size=3)
    st.b = rng.normal(scale=0.4, size=(N, spec.p))
    A = rng.normal(size=(spec.p, spec.p))
    st.sigma_inv = A @ A.T + spec.p * np.eye(spec.p)
    if st.log_sigma0 is not None:
        st.log_sigma0 = float(rng.normal(scale=0.3))
    if st.log_sigma is not None:
        st.log_sigma = rng.normal(scale=0.3, size=N)
    if st.varpi is not None:
        st.varpi = float(rng.uniform(0.5, 5))
    for l in st.gamma:
        st.gamma[l] = np.cumsum(rng.normal(scale=0.1, size=spec.basis.Q)) - 1.0 * (l == 0)
        st.tau2[l] = float(rng.uniform(0.05, 2))
    if st.lam is not None:
        st.lam = rng.uniform(0.05, 0.5, size=spec.num_pieces)
    if st.rho is not None:
        st.rho = float(rng.uniform(0.6, 1.8))
    if st.g_const is not None:
        st.g_const = rng.normal(scale=0.3, size=2)
    return st


@pytest.fixture
def selected_spec():
    return ModelSpec(VarianceModel.EXCHANGEABLE, Linking.SHARED_SIGMA, Baseline.PSPLINE)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
