"""Access to the bundled ensemble-suite dataset."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .model import SuiteModel, load_suite_model


def data_dir() -> Path:
    return Path(resources.files("epsim") / "data")


def measurements_path() -> Path:
    return data_dir() / "rmi_eps_table2.csv"


def edges_path() -> Path:
    return data_dir() / "rmi_eps_edges.json"


def suite_model_path() -> Path:
    return data_dir() / "rmi_eps.json"


def profiles_dir() -> Path:
    return data_dir() / "profiles"


def load_bundled_model() -> SuiteModel:
    return load_suite_model(suite_model_path())
