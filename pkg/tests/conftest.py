import numpy as np
import pytest

from cnpc.model import ROLE_CLASS, CausalModel, CpdTable, Variable


def make_chain(p1=0.3, p2_given=0.9, p2_not=0.2, p3_given=0.7, p3_not=0.1):
    """V1 -> V2 -> V3 with V3 as the class; binary states named '0'/'1'."""
    return CausalModel(
        (
            Variable("V1", ("0", "1")),
            Variable("V2", ("0", "1")),
            Variable("V3", ("0", "1"), ROLE_CLASS),
        ),
        (("V1", "V2"), ("V2", "V3")),
        (
            CpdTable("V1", (), np.array([[1 - p1, p1]])),
            CpdTable("V2", ("V1",), np.array([[1 - p2_not, p2_not], [1 - p2_given, p2_given]])),
            CpdTable("V3", ("V2",), np.array([[1 - p3_not, p3_not], [1 - p3_given, p3_given]])),
        ),
    )


def make_fork(p1=0.3, a=0.2, b=0.9, c=0.4, d=0.75):
    """V2 <- V1 -> V3, declared in order (V2, V3, V1), V3 as the class."""
    return CausalModel(
        (
            Variable("V2", ("0", "1")),
            Variable("V3", ("0", "1"), ROLE_CLASS),
            Variable("V1", ("0", "1")),
        ),
        (("V1", "V2"), ("V1", "V3")),
        (
            CpdTable("V2", ("V1",), np.array([[1 - a, a], [1 - b, b]])),
            CpdTable("V3", ("V1",), np.array([[1 - c, c], [1 - d, d]])),
            CpdTable("V1", (), np.array([[1 - p1, p1]])),
        ),
    )


@pytest.fixture
def chain():
    return make_chain()


@pytest.fixture
def fork():
    return make_fork()
