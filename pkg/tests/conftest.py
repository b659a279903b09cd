"""Shared fixtures: the deterministic bundle and one evaluation per mode."""

from __future__ import annotations

import pytest

from planvet.catalog import load_catalog, load_policy
from planvet.corpus import load_corpus
from planvet.engine import MODE_DEFER
from planvet.fixtures import build_bundle
from planvet.mapping import load_mapping_rules
from planvet.pipeline import RunConfig, evaluate


@pytest.fixture(scope="session")
def bundle(tmp_path_factory):
    dest = tmp_path_factory.mktemp("fixture") / "bundle"
    build_bundle(dest)
    return dest


@pytest.fixture(scope="session")
def policy(bundle):
    return load_policy(bundle / "catalog.json", bundle / "policy.json")


@pytest.fixture(scope="session")
def catalog(bundle):
    return load_catalog(bundle / "catalog.json")


@pytest.fixture(scope="session")
def corpus(bundle, catalog):
    return load_corpus(bundle / "corpus", catalog)


@pytest.fixture(scope="session")
def mapping_rules(bundle):
    rules, _sha = load_mapping_rules(bundle / "mapping_rules.json")
    return rules


@pytest.fixture(scope="session")
def official_eval(bundle, tmp_path_factory):
    out = tmp_path_factory.mktemp("eval") / "out_remove"
    config = RunConfig.from_json(bundle / "config.json", output_dir=str(out), rerun_label="r1")
    return evaluate(config)


@pytest.fixture(scope="session")
def defer_eval(bundle, tmp_path_factory):
    out = tmp_path_factory.mktemp("eval") / "out_defer"
    config = RunConfig.from_json(
        bundle / "config.json",
        output_dir=str(out),
        approval_mode=MODE_DEFER,
        rerun_label="defer",
    )
    return evaluate(config)
