import copy

import pytest

from sharpness_lab import ConfigError
from sharpness_lab.config import parse_config
from sharpness_lab.sharpness import CharPoly, Determinant, Moment

VALID_ORACLE = {
    "loss": {"name": "saddle", "point": [0.0, 0.0]},
    "presets": [{"preset": "trace"}, {"preset": "charpoly", "sigma": 0.4}],
    "samples": 1000,
    "seed": 3,
    "output": {"dir": "out"},
}

VALID_ESTIMATE = {
    "loss": {"name": "scale_inv", "point": [1.0, 1.0]},
    "spec": {"preset": "trace"},
    "rhos": [0.2, 0.1],
    "samples": 500,
}

VALID_TRAIN = {
    "loss": {"name": "quadratic", "matrix": [[1.0, 0.0], [0.0, 2.0]],
             "point": [1.0, 1.0]},
    "optimizer": {"kind": "sgd", "eta": 0.1, "epochs": 2},
    "study": {"lambdas": [0.0], "seeds": [0, 1]},
}

VALID_INVARIANCE = {
    "loss": {"name": "scale_inv"},
    "spec": {"preset": "determinant", "half_width": 1.0},
    "transform": {"kind": "diag_rescale", "scales": [2.0]},
    "mode": "coupled",
    "points": [[1.0, 1.0]],
    "samples": 100,
}

VALID_UNIVERSALITY = {"matrix": [[1.0, 0.0], [0.0, 2.0]]}


def test_valid_configs_parse():
    parse_config(copy.deepcopy(VALID_ORACLE), "oracle")
    parse_config(copy.deepcopy(VALID_ESTIMATE), "estimate")
    parse_config(copy.deepcopy(VALID_TRAIN), "train")
    parse_config(copy.deepcopy(VALID_INVARIANCE), "invariance-check")
    parse_config(copy.deepcopy(VALID_UNIVERSALITY), "universality-demo")


def test_preset_parameters_wired_through():
    cfg = parse_config({
        "loss": {"name": "saddle"},
        "presets": [{"preset": "determinant", "half_width": 5.0},
                    {"preset": "moment", "degree": 3, "measure": "sphere"},
                    {"preset": "charpoly", "sigma": -0.2}],
    }, "oracle")
    det, mom, cp = cfg.presets
    assert isinstance(det, Determinant) and det.half_width == 5.0
    assert isinstance(mom, Moment) and (mom.degree, mom.measure) == (3, "sphere")
    assert isinstance(cp, CharPoly) and cp.sigma == -0.2


# every entry: (command, mutate(doc), message fragment)
BAD_CASES = [
    ("oracle", lambda d: d.pop("loss"), "missing required"),
    ("oracle", lambda d: d.pop("presets"), "missing required"),
    ("oracle", lambda d: d.update(extra_key=1), "unknown key"),
    ("oracle", lambda d: d["loss"].update(bogus=2), "unknown key"),
    ("oracle", lambda d: d["loss"].update(name="mystery"), "must be one of"),
    ("oracle", lambda d: d.update(samples="many"), "expected int"),
    ("oracle", lambda d: d["presets"].__setitem__(0, {"preset": "trace", "t": 1}),
     "unknown key"),
    ("oracle", lambda d: d["presets"].__setitem__(0, {"preset": "determinant"}),
     "missing required"),
    ("estimate", lambda d: d.update(rhos=[]), "must not be empty"),
    ("estimate", lambda d: d.update(rhos=[0.1, -0.2]), "positive"),
    ("estimate", lambda d: d.update(rhos="0.1"), "expected list"),
    ("estimate", lambda d: d.pop("spec"), "missing required"),
    ("train", lambda d: d["optimizer"].pop("eta"), "missing required"),
    ("train", lambda d: d["optimizer"].update(eta="fast"), "expected number"),
    ("train", lambda d: d["optimizer"].update(kind="adam"), "must be one of"),
    ("train", lambda d: d["study"].update(warmup=1), "unknown key"),
    ("invariance-check", lambda d: d["transform"].update(kind="shear"),
     "must be one of"),
    ("invariance-check", lambda d: d.update(mode="both"), "must be one of"),
    ("invariance-check", lambda d: d["loss"].update(name="saddle"),
     "invariance checks support"),
    ("universality-demo", lambda d: d.update(loss={"name": "saddle"}),
     "exactly one"),
    ("universality-demo", lambda d: d.pop("matrix"), "exactly one"),
    ("universality-demo", lambda d: d.update(matrix=[[1.0, 2.0]]), "square"),
]

_BASES = {
    "oracle": VALID_ORACLE,
    "estimate": VALID_ESTIMATE,
    "train": VALID_TRAIN,
    "invariance-check": VALID_INVARIANCE,
    "universality-demo": VALID_UNIVERSALITY,
}


@pytest.mark.parametrize("command,mutate,fragment", BAD_CASES,
                         ids=[f"{c}-{m}" for c, _, m in BAD_CASES])
def test_schema_corpus_rejected(command, mutate, fragment):
    doc = copy.deepcopy(_BASES[command])
    mutate(doc)
    with pytest.raises(ConfigError, match=fragment):
        parse_config(doc, command)


def test_bias_study_needs_mlp_and_lambdas():
    doc = copy.deepcopy(VALID_TRAIN)
    doc["study"]["lambdas"] = [0.0, 0.1]
    with pytest.raises(ConfigError, match="mlp"):
        parse_config(doc, "bias-study")
    mlp_doc = {
        "loss": {"name": "mlp", "hidden": [8], "dataset":
                 {"kind": "synth_blobs", "classes": 3, "per_class": 10}},
        "optimizer": {"kind": "frob_sam", "eta": 0.01, "rho": 0.01, "n": 2,
                      "epochs": 1},
        "study": {"lambdas": [], "seeds": [0]},
    }
    with pytest.raises(ConfigError, match="nonempty"):
        parse_config(copy.deepcopy(mlp_doc), "bias-study")
    mlp_doc["study"]["lambdas"] = [0.0]
    cfg = parse_config(mlp_doc, "bias-study")
    assert cfg.tracking.frob_sq  # turned on by default for the study


def test_mlp_dataset_required():
    with pytest.raises(ConfigError, match="dataset"):
        parse_config({"loss": {"name": "mlp"},
                      "optimizer": {"eta": 0.1}}, "train")
