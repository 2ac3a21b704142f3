"""Shared config builders for trainer/CLI tests."""
import copy

from astralora.config import parse_config

BASE = {
    "name": "t",
    "dataset": {"kind": "spirals", "n": 200, "noise": 0.1, "test_fraction": 0.25},
    "network": {"layers": [
        {"type": "dense", "d_out": 8},
        {"type": "relu"},
        {"type": "blackbox", "kind": "matvec", "d_out": 8},
        {"type": "relu"},
        {"type": "dense", "d_out": 2},
    ]},
    "train": {"eta": 0.3, "eta_bb": 0.01, "m_bb": 5, "m_sm": 7, "rank": 3, "batch_size": 8, "steps": 10},
}


def raw_config(**train):
    raw = copy.deepcopy(BASE)
    raw["train"].update(train)
    return raw


def run_config(kind="matvec", **train):
    raw = raw_config(**train)
    raw["network"]["layers"][2]["kind"] = kind
    return parse_config(raw)


TOML = """\
name = "t"

[dataset]
kind = "spirals"
n = 200

[network]
layers = [
    { type = "dense", d_out = 8 },
    { type = "relu" },
    { type = "blackbox", kind = "matvec", d_out = 8 },
    { type = "relu" },
    { type = "dense", d_out = 2 },
]

[train]
eta = 0.3
eta_bb = 0.01
m_bb = 5
m_sm = 7
rank = 3
batch_size = 8
steps = 10
eval_every = 5
"""
