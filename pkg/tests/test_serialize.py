import json

import numpy as np
import pytest

from localas import experiments as ex
from localas.clustering import TopDownConfig, build_tree
from localas.serialize import SCHEMA_VERSION, dumps_tree, loads_tree, tree_to_dict


@pytest.mark.parametrize("method,K", [("global-as", 1), ("kmedoids-as", 3), ("topdown", 3)])
def test_round_trip_predictions_bit_exact(quartic_data, method, K):
    data, split = quartic_data
    cfg = TopDownConfig(n_child_min=2, n_child_max=3)
    tree = ex.fit_method(data, split, method, K, cfg)
    text = dumps_tree(tree)
    back = loads_tree(text)
    X = data.inputs[split.test_idx]
    np.testing.assert_array_equal(back.predict(X), tree.predict(X))
    np.testing.assert_array_equal(back.route(X), tree.route(X))
    assert dumps_tree(back) == text


def test_document_schema(quartic_data):
    data, split = quartic_data
    doc = tree_to_dict(ex.fit_method(data, split, "kmedoids-as", 2))
    assert doc["schema_version"] == SCHEMA_VERSION
    assert set(doc["config"]) >= {"K_max", "n_el", "r_max"}
    json.dumps(doc, allow_nan=False)


def test_rejects_unknown_schema(quartic_data):
    data, split = quartic_data
    doc = tree_to_dict(ex.fit_method(data, split, "global-as", 1))
    doc["schema_version"] = 99
    with pytest.raises(ValueError):
        loads_tree(json.dumps(doc))
