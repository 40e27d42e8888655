"""Operator CLI: simulate, analyze, ground.

``simulate`` runs a configured simulation and writes an artifact directory
(actions.jsonl, content.jsonl, agents.jsonl, manifest.json). ``analyze``
turns one artifact directory into plot-ready CSVs and a text summary, with an
optional second run for the Mann-Whitney chain-length comparison. ``ground``
runs the empirical pipeline from platform records to an engine-ready
population bundle.

Config files are JSON; every key can be overridden from the command line.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .analytics import (
    action_probability_vector,
    chain_length_table,
    cluster_agents,
    content_mix,
    mann_whitney_u,
    order_dynamics,
    per_topic_chain_stats,
    trace_chains,
)
from .engine import (
    SCHEMA_VERSION,
    SimulationConfig,
    content_from_dict,
    record_from_dict,
    run_simulation,
    write_artifacts,
)
from .grounding import (
    assign_trait,
    build_engagement_graph,
    empirical_action_vector,
    extract_ego_network,
    infer_identity,
    parse_records,
    IngestError,
    PLACEHOLDER_IDENTITY,
    SECONDS_PER_DAY,
)
from .memory import MemoryParams
from .networks import (
    build_interaction_network,
    build_resharing_network,
    centrality_by_trait,
    degree_centrality,
)
from .reasoning import EndpointConfig, LLMBackend, StubBackend


class CliError(Exception):
    """User-facing error with a categorized message; exits non-zero."""


_CONFIG_KEYS = {
    "configuration", "iterations", "feed_size", "master_seed", "backend",
    "personas", "memory",
}
_BACKEND_KEYS = {"type", "endpoint", "model", "temperature", "timeout"}


def load_config(path: Path) -> dict:
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise CliError(f"config parse error in {path} at line {err.lineno}: "
                       f"{err.msg}")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise CliError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    backend = raw.get("backend", {})
    unknown = set(backend) - _BACKEND_KEYS
    if unknown:
        raise CliError(f"unknown backend config key(s): "
                       f"{', '.join(sorted(unknown))}")
    memory = raw.get("memory", {})
    valid_memory = {f for f in MemoryParams.__dataclass_fields__}
    unknown = set(memory) - valid_memory
    if unknown:
        raise CliError(f"unknown memory config key(s): "
                       f"{', '.join(sorted(unknown))}")
    return raw


def read_personas(path: Path) -> list:
    personas = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            personas.append({"id": obj["id"],
                             "identity_text": obj["identity_text"],
                             "topic": obj.get("topic")})
        except (json.JSONDecodeError, KeyError) as err:
            raise CliError(f"personas line {number}: {err}")
    return personas


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _make_backend(backend_cfg: dict):
    if backend_cfg.get("type", "stub") == "stub":
        return StubBackend()
    if "endpoint" not in backend_cfg or "model" not in backend_cfg:
        raise CliError("llm backend requires 'endpoint' and 'model'")
    return LLMBackend(EndpointConfig(
        url=backend_cfg["endpoint"],
        model=backend_cfg["model"],
        temperature=backend_cfg.get("temperature", 0.7),
        timeout=backend_cfg.get("timeout", 60.0),
    ))


def cmd_simulate(args) -> int:
    cfg = load_config(Path(args.config)) if args.config else {}
    for key, value in (
        ("configuration", args.configuration), ("iterations", args.iterations),
        ("feed_size", args.feed_size), ("master_seed", args.seed),
        ("personas", args.personas),
    ):
        if value is not None:
            cfg[key] = value
    backend_cfg = dict(cfg.get("backend", {}))
    if args.backend:
        backend_cfg["type"] = args.backend
    if args.endpoint:
        backend_cfg["endpoint"] = args.endpoint
    if args.model:
        backend_cfg["model"] = args.model
    if args.temperature is not None:
        backend_cfg["temperature"] = args.temperature
    cfg["backend"] = backend_cfg

    if "personas" not in cfg:
        raise CliError("no personas file given (config key 'personas' or "
                       "--personas)")
    personas_path = Path(cfg["personas"])
    if not personas_path.exists():
        raise CliError(f"personas file not found: {personas_path}")
    personas = read_personas(personas_path)

    try:
        sim_config = SimulationConfig(
            configuration=cfg.get("configuration", "FullModel"),
            iterations=cfg.get("iterations", 25),
            feed_size=cfg.get("feed_size", 5),
            master_seed=cfg.get("master_seed", 0),
            memory=MemoryParams(**cfg.get("memory", {})),
        )
    except (ValueError, TypeError) as err:
        raise CliError(str(err))

    out = Path(args.out)
    backend = _make_backend(backend_cfg)
    world = run_simulation(sim_config, personas, backend, checkpoint_path=out)
    write_artifacts(world, out)

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "master_seed": sim_config.master_seed,
        "config": {
            "configuration": sim_config.configuration,
            "iterations": sim_config.iterations,
            "feed_size": sim_config.feed_size,
            "backend": {k: v for k, v in backend_cfg.items()},
            "memory": asdict(sim_config.memory),
        },
        "inputs": {str(personas_path): _sha256(personas_path)},
        "outputs": ["actions.jsonl", "content.jsonl", "agents.jsonl"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                  sort_keys=True) + "\n")
    print(f"wrote artifacts to {out}")
    return 0


def load_run(run_dir: Path):
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("schema_version") != SCHEMA_VERSION:
            raise CliError(f"incompatible artifact schema_version in {run_dir} "
                           f"(expected {SCHEMA_VERSION})")
    log = [record_from_dict(json.loads(line))
           for line in (run_dir / "actions.jsonl").read_text().splitlines()
           if line.strip()]
    content = {}
    for line in (run_dir / "content.jsonl").read_text().splitlines():
        if line.strip():
            item = content_from_dict(json.loads(line))
            content[item.content_id] = item
    traits = {}
    agents_path = run_dir / "agents.jsonl"
    if agents_path.exists():
        for line in agents_path.read_text().splitlines():
            if line.strip():
                obj = json.loads(line)
                traits[obj["agent_id"]] = obj.get("trait")
    return log, content, traits


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_analyze(args) -> int:
    run_dir = Path(args.run)
    if not (run_dir / "actions.jsonl").exists():
        raise CliError(f"not an artifact directory: {run_dir}")
    log, content, traits = load_run(run_dir)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    which = args.which
    summary = [f"run: {run_dir}", f"actions: {len(log)}",
               f"content items: {len(content)}"]

    chains = trace_chains(content, traits)
    if which in ("all", "rq1"):
        agents = sorted({r.agent for r in log})
        vectors = {a: action_probability_vector(a, log) for a in agents}
        rows = []
        if vectors and len(vectors) >= args.k_max:
            clustering = cluster_agents(vectors, args.k_min, args.k_max,
                                        seed=args.cluster_seed)
            summary.append(f"clustering: k={clustering.k} "
                           f"silhouette={clustering.silhouette:.3f}")
            for agent_id in agents:
                v = vectors[agent_id]
                rows.append([agent_id, traits.get(agent_id), *v.as_tuple(),
                             clustering.assignments[agent_id]])
        _write_csv(out / "clusters.csv",
                   ["agent", "trait", "p_post", "p_reshare", "p_interact",
                    "p_inactive", "cluster"], rows)

    if which in ("all", "rq2"):
        _write_csv(out / "chains.csv",
                   ["root", "topic", "length", "path_agents"],
                   [[c.root, c.topic, c.length,
                     "|".join(agent for _, agent, _ in c.nodes)]
                    for c in chains])
        table = chain_length_table(chains)
        _write_csv(out / "chain_table.csv",
                   ["length", "count", "percentage"],
                   [[l, table.counts[l], f"{table.percentages[l]:.2f}"]
                    for l in sorted(table.counts)])
        _write_csv(out / "order_dynamics.csv",
                   ["iteration", "pct_first_order", "pct_second_order"],
                   [[it, *(f"{v:.2f}" for v in pair)] if pair else [it, "", ""]
                    for it, pair in sorted(order_dynamics(log).items())])
        _write_csv(out / "content_mix.csv",
                   ["iteration", "pct_original", "pct_reshared"],
                   [[it, *(f"{v:.2f}" for v in pair)] if pair else [it, "", ""]
                    for it, pair in sorted(content_mix(log).items())])
        summary.append(f"chains: {table.total} mean_length={table.mean:.2f} "
                       f"max_length={table.max}")
        for topic, (mean, share) in sorted(per_topic_chain_stats(chains).items(),
                                           key=lambda kv: str(kv[0])):
            summary.append(f"topic {topic}: mean_length={mean:.2f} "
                           f"share={share:.1f}%")

    if which in ("all", "rq3"):
        n = max(len(traits), 2)
        for name, graph in (
            ("resharing", build_resharing_network(log, content)),
            ("interaction", build_interaction_network(log, content)),
        ):
            cin = degree_centrality(graph, "in", n) if graph.nodes else {}
            cout = degree_centrality(graph, "out", n) if graph.nodes else {}
            _write_csv(out / f"centrality_{name}.csv",
                       ["agent", "trait", "in_degree", "out_degree"],
                       [[a, traits.get(a), cin.get(a, 0.0), cout.get(a, 0.0)]
                        for a in sorted(traits or set(cin) | set(cout))])
            if traits:
                for trait, (median, q1, q3, count) in sorted(
                        centrality_by_trait(cout, traits).items(),
                        key=lambda kv: str(kv[0])):
                    summary.append(f"{name} out-degree {trait}: "
                                   f"median={median:.4f} n={count}")

    if args.compare:
        other_log, other_content, _ = load_run(Path(args.compare))
        lengths_a = [c.length for c in chains]
        lengths_b = [c.length for c in trace_chains(other_content)]
        if lengths_a and lengths_b:
            u, p = mann_whitney_u(lengths_a, lengths_b)
            summary.append(f"chain-length comparison vs {args.compare}: "
                           f"U={u:.1f} p={p:.4g}")
        else:
            summary.append("chain-length comparison skipped: a run has no chains")

    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    return 0


def cmd_ground(args) -> int:
    records_path = Path(args.records)
    if not records_path.exists():
        raise CliError(f"records file not found: {records_path}")
    try:
        records = parse_records(records_path.read_text().splitlines())
    except IngestError as err:
        raise CliError(str(err))
    if not records:
        raise CliError(f"records file is empty: {records_path}")

    graph = build_engagement_graph(records)
    ego = extract_ego_network(graph, cap=args.cap)
    community = ego.nodes

    origin = min(r.timestamp for r in records)
    span = max(r.timestamp for r in records) - origin
    slots = max(1, int(span // SECONDS_PER_DAY) + 1)

    by_user = {}
    for record in records:
        by_user.setdefault(record.user, []).append(record)

    backend = None
    if not args.no_identity_inference:
        if not args.endpoint or not args.model:
            raise CliError("identity inference requires --endpoint and --model "
                           "(or pass --no-identity-inference)")
        backend = LLMBackend(EndpointConfig(url=args.endpoint, model=args.model,
                                            temperature=args.temperature))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    assignments = {}
    identities = {}
    for user in sorted(community):
        vector = empirical_action_vector(by_user.get(user, []), slots,
                                         origin=origin)
        assignments[user] = assign_trait(vector, user=user)
        posts = [r.text for r in by_user.get(user, []) if r.kind == "post"]
        if backend is None:
            identities[user] = PLACEHOLDER_IDENTITY
        else:
            identities[user] = infer_identity(posts, backend)

    follow_edges = []
    if args.follows:
        with open(args.follows, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0] == "follower":
                    continue
                if row[0] in community and row[1] in community:
                    follow_edges.append((row[0], row[1]))

    _write_csv(out / "assignments.csv",
               ["user", "p_post", "p_reshare", "p_interact", "p_inactive",
                "trait", "distance"],
               [[u, *a.empirical_vector.as_tuple(), a.assigned.name,
                 f"{a.distance:.6f}"] for u, a in sorted(assignments.items())])
    with open(out / "personas.jsonl", "w") as fh:
        for user in sorted(community):
            fh.write(json.dumps({"id": user, "identity_text": identities[user],
                                 "topic": None,
                                 "trait": assignments[user].assigned.name},
                                sort_keys=True) + "\n")
    _write_csv(out / "follows.csv", ["follower", "followee"], follow_edges)
    _write_csv(out / "ego_edges.csv", ["src", "dst", "weight"],
               [[s, d, w] for (s, d), w in sorted(ego.edges.items())])
    print(f"ground bundle written to {out}: {len(community)} users, "
          f"{len(follow_edges)} follow edges")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="traitsim")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulation")
    sim.add_argument("--config", help="JSON config file")
    sim.add_argument("--personas", help="personas jsonl file")
    sim.add_argument("--configuration", choices=("FullModel", "IdentityOnly",
                                                 "RandomRecommendation",
                                                 "PsychometricTraits"))
    sim.add_argument("--backend", choices=("stub", "llm"))
    sim.add_argument("--endpoint")
    sim.add_argument("--model")
    sim.add_argument("--temperature", type=float)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--iterations", type=int)
    sim.add_argument("--feed-size", type=int, dest="feed_size")
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="analyze an artifact directory")
    ana.add_argument("--run", required=True)
    ana.add_argument("--which", choices=("all", "rq1", "rq2", "rq3"),
                     default="all")
    ana.add_argument("--compare", help="second run for the chain comparison")
    ana.add_argument("--k-min", type=int, default=2, dest="k_min")
    ana.add_argument("--k-max", type=int, default=8, dest="k_max")
    ana.add_argument("--cluster-seed", type=int, default=0, dest="cluster_seed")
    ana.add_argument("--out")
    ana.set_defaults(func=cmd_analyze)

    grd = sub.add_parser("ground", help="empirical grounding pipeline")
    grd.add_argument("--records", required=True)
    grd.add_argument("--follows")
    grd.add_argument("--cap", type=int, default=1000)
    grd.add_argument("--endpoint")
    grd.add_argument("--model")
    grd.add_argument("--temperature", type=float, default=0.7)
    grd.add_argument("--no-identity-inference", action="store_true")
    grd.add_argument("--out", required=True)
    grd.set_defaults(func=cmd_ground)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
