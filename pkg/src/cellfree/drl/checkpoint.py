"""Versioned JSON checkpoints of an AgentBundle.

Floats are written with repr round-tripping, so save -> load -> save is
byte-identical. The replay buffer is not stored.
"""

import json

import numpy as np

from .agents import AgentBundle
from .nn import Adam, DenseNet

FORMAT = "cellfree-agent"
VERSION = 1
NETS = ("actor", "critic", "actor_target", "critic_target", "qnet", "qnet_target")
OPTIMIZERS = ("actor_opt", "critic_opt", "q_opt")


class CheckpointError(ValueError):
    pass


def _net_record(net):
    return {"sizes": net.sizes, "activations": net.activations, "params": [p.tolist() for p in net.params()]}


def _opt_record(opt):
    return {"t": opt.t, "lr": opt.lr, "betas": [opt.b1, opt.b2], "eps": opt.eps,
            "m": [a.tolist() for a in opt.m], "v": [a.tolist() for a in opt.v]}


def dumps(bundle):
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "num_users": bundle.num_users,
        "num_clusters": bundle.num_clusters,
        "num_configs": bundle.num_configs,
        "meta": bundle.meta,
        "nets": {n: _net_record(getattr(bundle, n)) for n in NETS if getattr(bundle, n) is not None},
        "optimizers": {n: _opt_record(getattr(bundle, n)) for n in OPTIMIZERS if getattr(bundle, n) is not None},
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not a checkpoint: {exc}") from exc
    if doc.get("format") != FORMAT:
        raise CheckpointError("not a cellfree agent checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    nets = {n: DenseNet(r["sizes"], r["activations"], params=[np.array(p, dtype=float) for p in r["params"]])
            for n, r in doc["nets"].items()}
    opts = {}
    for n, r in doc["optimizers"].items():
        opt = Adam([np.zeros(1)], r["lr"], tuple(r["betas"]), r["eps"])
        opt.load_state(r)
        opts[n] = opt
    return AgentBundle(doc["num_users"], doc["num_clusters"], doc["num_configs"],
                       nets["actor"], nets["critic"], nets["actor_target"], nets["critic_target"],
                       nets.get("qnet"), nets.get("qnet_target"),
                       opts.get("actor_opt"), opts.get("critic_opt"), opts.get("q_opt"), None, doc.get("meta", {}))


def save(bundle, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(bundle))


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return loads(fh.read())
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
