"""Campaign orchestration: staged execution with exposure feedback.

One run wires a shim (policy engine) to a backend, drives the staged
pipeline, and leaves a session directory behind: per-stage harness/kernel
logs, generated mutation rules, the report in both renderings, and a
manifest with content digests for replay.

Stage order and feedback: stage 1 classifies exposure over the whole
catalog; stages 2 and 3 only ever exercise syscalls from stage 1's
exposed list. The third stage runs as three campaigns: scalar-return
forging, out-parameter forging, and the skip-service channel probe whose
timings feed the bandwidth ranking.
"""

from __future__ import annotations

import datetime
import json
from pathlib import Path
from typing import Optional

from .analysis import (
    build_report,
    classify_exposure,
    correlate,
    detect_return_checks,
    diff_parameters,
    estimate_bandwidth,
    leaked_bits_per_call,
    measure_rates,
    oracle_mismatches,
    render_text,
)
from .analysis.correlate import strategy_blocks
from .analysis.exposure import exposed_list
from .catalog import DEFAULT_CATALOG, load_default_catalog
from .fuzz import MockSandbox, Strategy
from .fuzz.generate import generate
from .fuzz.plan import CampaignPlan, derive_seed, make_plan, save_plan
from .harness import Harness, InvocationMethod, LogReader, LogWriter, run_campaign
from .interceptor import MockInterceptor, load_mutation_rules, save_mutation_rules
from .interceptor.mutation import (
    CRAFTED_SCALAR,
    MutationRule,
    SERVE,
    SKIP,
    SKIP_SERVICE_SPECS,
    crafted_out_overrides,
)
from .kernel import Clock, MockKernel, load_service_times
from .model.memory import VirtualAddressSpace
from .model.registry import load_catalog
from .session import CampaignConfig, SessionManifest, sha256_file, sha256_text
from .shim import PRESET_NAMES, Shim, load_policy, load_preset, preset_path


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _load_inputs(config: CampaignConfig):
    if config.catalog:
        registry = load_catalog(config.catalog)
        catalog_path = Path(config.catalog)
    else:
        registry = load_default_catalog()
        catalog_path = DEFAULT_CATALOG
    if config.policy in PRESET_NAMES:
        policy = load_preset(config.policy, registry)
        policy_path = preset_path(config.policy)
    else:
        policy = load_policy(config.policy, registry)
        policy_path = Path(config.policy)
    return registry, policy, catalog_path, policy_path


def session_id_for(config: CampaignConfig, catalog_digest: str) -> str:
    return sha256_text(config.digest() + catalog_digest)[:12]


def run(config: CampaignConfig) -> SessionManifest:
    if config.stages == "sfi":
        return _run_sfi(config)
    return drive_session(config, traced=(config.backend == "tracer"))


# ---------------------------------------------------------------------------
# stage executors
# ---------------------------------------------------------------------------

class _MockSession:
    """One shim lifetime wired to the deterministic kernel backend."""

    def __init__(self, config, registry, policy, session: str, out: Path, **_):
        self.config = config
        self.registry = registry
        self.policy = policy
        self.session = session
        self.out = out
        self.clock = Clock()
        st = load_service_times(config.service_times) if config.service_times else None
        self.kernel = MockKernel(registry, self.clock, st)
        self.internal = MockKernel(registry, self.clock, st, label="internal")
        self.interceptor = MockInterceptor(self.kernel, registry, session, writer=None)
        self.shim = Shim(policy, registry, self.interceptor, self.internal, VirtualAddressSpace)
        self.sandbox = MockSandbox(self.kernel, mirrors=(self.internal,))
        self.artifacts: dict[str, str] = {}
        self.partial = False

    def run_stage(self, tag, plan, rules=None, probe_native=False) -> None:
        u_path = self.out / f"u_{tag}.log"
        k_path = self.out / f"k_{tag}.log"
        uw = LogWriter(u_path, self.session)
        kw = LogWriter(k_path, self.session)
        self.interceptor.set_writer(kw)
        self.interceptor.clear_mutations()
        for rule in rules or []:
            self.interceptor.install_mutation(rule)
        method = InvocationMethod(self.config.method)
        harness = Harness(self.shim, self.registry, self.session, uw, self.clock,
                          VirtualAddressSpace)
        try:
            run_campaign(plan, self.registry, harness, self.sandbox,
                         kernels=(self.kernel, self.internal), method=method)
            if probe_native:
                uw.write_meta("native-probe", native=self._probe_native(harness))
        finally:
            uw.close()
            kw.close()
            self.interceptor.set_writer(None)
        self.artifacts[f"u_{tag}"] = u_path.name
        self.artifacts[f"k_{tag}"] = k_path.name

    def _probe_native(self, harness: Harness) -> bool:
        """Issue one raw trap; a fault means no native syscall support."""
        spec = self.registry.lookup("getpid")
        case = generate(spec, Strategy.SEMANTIC,
                        derive_seed(self.config.seed, "native-probe"), self.registry)
        rs = self.sandbox.prepare(spec)
        try:
            rec = harness.invoke(case, InvocationMethod.DIRECT_TRAP, rs)
        finally:
            self.sandbox.release(rs)
        return rec.ret.fault is None


class _TracedSession:
    """Stage executor that spawns one traced shim subprocess per stage."""

    def __init__(self, config, registry, policy, session, out: Path,
                 catalog_path=None, policy_path=None):
        self.config = config
        self.registry = registry
        self.session = session
        self.out = out
        self.catalog_path = catalog_path
        self.policy_path = policy_path
        self.artifacts: dict[str, str] = {}
        self.partial = False

    def run_stage(self, tag, plan, rules=None, probe_native=False) -> None:
        from .interceptor.tracer import trace_stage

        outcome = trace_stage(
            self.out, tag, self.registry, self.session,
            self.catalog_path, self.policy_path, plan,
            rules=tuple(rules or ()), method=self.config.method,
        )
        if not outcome.clean:
            self.partial = True
        self.artifacts[f"u_{tag}"] = f"u_{tag}.log"
        self.artifacts[f"k_{tag}"] = f"k_{tag}.log"


# ---------------------------------------------------------------------------
# shared staged driver
# ---------------------------------------------------------------------------

def drive_session(config: CampaignConfig, traced: bool = False) -> SessionManifest:
    registry, policy, catalog_path, policy_path = _load_inputs(config)
    catalog_digest = sha256_file(catalog_path)
    session = session_id_for(config, catalog_digest)
    out = Path(config.out_dir) / session
    out.mkdir(parents=True, exist_ok=True)
    started = _now()

    cls = _TracedSession if traced else _MockSession
    sess = cls(config, registry, policy, session, out,
               catalog_path=catalog_path, policy_path=policy_path)
    stages_run: list[str] = []
    want = config.stages

    # stage 1: exposure over the full catalog
    n1 = int(config.iterations.get("stage1", 6))
    plan1 = make_plan(registry.names(), [Strategy.SEMANTIC], n1, derive_seed(config.seed, "stage1"))
    sess.run_stage("stage1", plan1, probe_native=not traced)
    stages_run.append("1")

    u1, k1, m1, _ = _read_stage(out, "stage1")
    corr1 = correlate(u1, k1)
    exposure = classify_exposure(u1, corr1)
    exposed = exposed_list(exposure)
    native = next((m["native"] for m in m1 if m.get("type") == "native-probe"), None)
    ambiguous = len(corr1.unmatched_k)

    sanitization: dict = {}
    return_checks: dict = {}
    channels: list = []
    blocks2: list = []
    stage2_pairs: dict = {}
    stage3_pairs: dict = {}

    if want in ("1+2", "1+2+3") and exposed:
        n2 = int(config.iterations.get("stage2", 10))
        strategies = [Strategy.SEMANTIC] if traced else [
            Strategy.SEMANTIC, Strategy.TYPED, Strategy.RANDOM,
        ]
        plan2 = make_plan(exposed, strategies, n2, derive_seed(config.seed, "stage2"))
        save_plan(plan2, out / "plan_stage2.yaml")
        sess.run_stage("stage2", plan2)
        stages_run.append("2")
        u2, k2, m2, _ = _read_stage(out, "stage2")
        corr2 = correlate(u2, k2)
        ambiguous += len(corr2.unmatched_k)
        blocks2 = strategy_blocks(m2)
        stage2_pairs = {name: corr2.pairs_for(name) for name in exposed}
        sanitization = diff_parameters(stage2_pairs)

    if want == "1+2+3" and exposed:
        n3 = int(config.iterations.get("stage3", 6))
        scalar_rules, out_rules, skip_rules = _stage3_rules(config, registry, exposed)
        save_mutation_rules(scalar_rules + out_rules + skip_rules, out / "rules_stage3.yaml")

        plan3a = make_plan([r.spec_name for r in scalar_rules], [Strategy.SEMANTIC], n3,
                           derive_seed(config.seed, "stage3"))
        plan3b = make_plan([r.spec_name for r in out_rules], [Strategy.SEMANTIC], n3,
                           derive_seed(config.seed, "stage3-out"))
        plan3c = make_plan([r.spec_name for r in skip_rules], [Strategy.SEMANTIC], n3,
                           derive_seed(config.seed, "stage3-channel"))

        sess.run_stage("stage3", CampaignPlan(plan3a.entries + plan3b.entries),
                       rules=scalar_rules + out_rules)
        if plan3c.entries:
            sess.run_stage("stage3c", plan3c, rules=skip_rules)
        stages_run.append("3")

        u3, k3, _, _ = _read_stage(out, "stage3")
        corr3 = correlate(u3, k3)
        ambiguous += len(corr3.unmatched_k)
        stage3_pairs = {name: corr3.pairs_for(name) for name in exposed}
        return_checks = detect_return_checks({k: v for k, v in stage3_pairs.items() if v})

        rates = measure_rates(k3)
        if plan3c.entries and (out / "k_stage3c.log").exists():
            _, k3c, _, _ = _read_stage(out, "stage3c")
            rates.update(measure_rates(k3c))
        for name in exposed:
            kname = exposure[name].target or name
            rate = rates.get(kname) or rates.get(name) or 0.0
            bits = leaked_bits_per_call(name, sanitization, stage2_pairs.get(name, []), blocks2)
            channels.append(estimate_bandwidth(name, bits, rate))

    report = build_report(
        session=session,
        policy_name=policy.name,
        backend=config.backend,
        stages=stages_run,
        exposure=exposure,
        sanitization=sanitization,
        return_checks=return_checks,
        channels=channels,
        native_support=native,
        partial=sess.partial,
        ambiguous_k=ambiguous,
    )
    (out / "report.json").write_text(json.dumps(report.to_doc(), indent=2) + "\n", encoding="utf-8")
    (out / "report.txt").write_text(render_text(report), encoding="utf-8")
    sess.artifacts["report_json"] = "report.json"
    sess.artifacts["report_txt"] = "report.txt"

    mismatches = oracle_mismatches(policy, exposure, sanitization, return_checks,
                                   stage2_pairs, stage3_pairs, registry)
    (out / "oracle.json").write_text(json.dumps({"mismatches": mismatches}, indent=2) + "\n",
                                     encoding="utf-8")
    sess.artifacts["oracle"] = "oracle.json"

    digests = {rel: sha256_file(out / rel) for rel in sorted(sess.artifacts.values())}
    manifest = SessionManifest(
        session=session,
        config=config.to_doc(),
        config_digest=config.digest(),
        catalog_digest=catalog_digest,
        policy_digest=sha256_file(policy_path),
        started=started,
        finished=_now(),
        artifacts=sess.artifacts,
        artifact_digests=digests,
        summary={
            "supported": report.supported,
            "exposed": report.exposed,
            "native_syscall_support": native,
            "oracle_mismatches": mismatches,
            "ambiguous_k": ambiguous,
            "partial": sess.partial,
            "stages": stages_run,
        },
    )
    manifest.save(out / "manifest.json")
    return manifest


def _stage3_rules(config, registry, exposed):
    if config.mutation_rules:
        forge = load_mutation_rules(config.mutation_rules, registry)
        scalar_rules = [r for r in forge
                        if r.serve == SERVE and r.return_override is not None and not r.out_overrides]
        out_rules = [r for r in forge if r.serve == SERVE and r.out_overrides]
        skip_rules = [r for r in forge if r.serve == SKIP]
        return scalar_rules, out_rules, skip_rules
    scalar_rules = [MutationRule(n, SERVE, return_override=CRAFTED_SCALAR) for n in exposed]
    out_rules = [
        MutationRule(n, SERVE, out_overrides=tuple(crafted_out_overrides(registry.lookup(n), registry)))
        for n in exposed
        if crafted_out_overrides(registry.lookup(n), registry)
    ]
    skip_rules = [
        MutationRule(n, SKIP, return_override=0,
                     out_overrides=tuple(crafted_out_overrides(registry.lookup(n), registry)))
        for n in SKIP_SERVICE_SPECS if n in exposed
    ]
    return scalar_rules, out_rules, skip_rules


def _read_stage(out: Path, tag: str):
    u = LogReader(out / f"u_{tag}.log")
    k = LogReader(out / f"k_{tag}.log")
    urecs = [r for r in u.records()]
    krecs = [r for r in k.records()]
    return urecs, krecs, list(u.metas()), list(k.metas())


# ---------------------------------------------------------------------------
# SFI stage
# ---------------------------------------------------------------------------

def _run_sfi(config: CampaignConfig) -> SessionManifest:
    from .sfi import corpus_matrix

    started = _now()
    session = sha256_text(config.digest())[:12]
    out = Path(config.out_dir) / session
    out.mkdir(parents=True, exist_ok=True)
    matrix = corpus_matrix(config.sfi_dir)
    (out / "sfi_matrix.json").write_text(json.dumps(matrix, indent=2) + "\n", encoding="utf-8")
    lines = ["SFI functionality matrix:"]
    for row in matrix["rows"]:
        lines.append(
            f"  {row['program']:<30} expect={row['expected']:<7} got={row['verdict']:<7} "
            f"{'OK' if row['pass'] else 'FAIL'}  {','.join(row['violations']) or '-'}"
        )
    lines.append("functionalities: " + json.dumps(matrix["functionalities"]))
    (out / "sfi_matrix.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    artifacts = {"sfi_matrix_json": "sfi_matrix.json", "sfi_matrix_txt": "sfi_matrix.txt"}
    manifest = SessionManifest(
        session=session,
        config=config.to_doc(),
        config_digest=config.digest(),
        catalog_digest="",
        policy_digest="",
        started=started,
        finished=_now(),
        artifacts=artifacts,
        artifact_digests={rel: sha256_file(out / rel) for rel in artifacts.values()},
        summary={"all_pass": matrix["all_pass"], "stages": ["sfi"]},
    )
    manifest.save(out / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# replay and re-analysis
# ---------------------------------------------------------------------------

def replay(manifest_path) -> dict:
    """Re-run a session from its manifest; compare logs modulo time fields.

    Detects tampered artifacts first (stored digest mismatch), then
    re-executes with the recorded config and seed into a scratch directory
    and reports the first divergence per log, field by field.
    """
    import tempfile

    from .harness.records import mask_time

    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        return {"verdict": "irreproducible", "reason": f"missing manifest {manifest_path}"}
    manifest = SessionManifest.load(manifest_path)
    base = manifest_path.parent

    for rel, digest in manifest.artifact_digests.items():
        p = base / rel
        if not p.exists():
            return {"verdict": "irreproducible", "reason": f"missing artifact {rel}"}
        if sha256_file(p) != digest:
            return {"verdict": "tampered", "reason": f"artifact digest mismatch: {rel}"}

    config = CampaignConfig.from_doc(manifest.config)
    if config.stages == "sfi":
        return {"verdict": "identical", "note": "sfi sessions are pure re-verification"}

    with tempfile.TemporaryDirectory() as tmp:
        config.out_dir = tmp
        fresh = run(config)
        fresh_dir = Path(tmp) / fresh.session
        divergences = []
        for name, rel in manifest.artifacts.items():
            if not (name.startswith("u_") or name.startswith("k_")):
                continue
            old_lines = (base / rel).read_text(encoding="utf-8").splitlines()
            new_lines = (fresh_dir / rel).read_text(encoding="utf-8").splitlines()
            if len(old_lines) != len(new_lines):
                divergences.append({
                    "log": rel, "line": min(len(old_lines), len(new_lines)) + 1,
                    "field": "(record count)",
                    "recorded": len(old_lines), "replayed": len(new_lines),
                })
                continue
            for idx, (a, b) in enumerate(zip(old_lines, new_lines)):
                ma, mb = mask_time(a), mask_time(b)
                if ma != mb:
                    divergences.append({"log": rel, "line": idx + 1, **_first_field_diff(ma, mb)})
                    break
    if divergences:
        return {"verdict": "diverged", "divergences": divergences}
    return {"verdict": "identical", "session": manifest.session}


def _first_field_diff(a_line: str, b_line: str) -> dict:
    try:
        a, b = json.loads(a_line), json.loads(b_line)
    except json.JSONDecodeError:
        return {"field": "(unparseable)", "recorded": a_line[:80], "replayed": b_line[:80]}
    for key in sorted(set(a) | set(b)):
        if a.get(key) != b.get(key):
            return {"field": key, "recorded": a.get(key), "replayed": b.get(key)}
    return {"field": "(none)", "recorded": "", "replayed": ""}


def analyze(session_dir) -> dict:
    """Re-run the analysis pipeline over existing logs; rewrites reports."""
    session_dir = Path(session_dir)
    manifest = SessionManifest.load(session_dir / "manifest.json")
    config = CampaignConfig.from_doc(manifest.config)
    registry, policy, _, _ = _load_inputs(config)

    u1, k1, m1, _ = _read_stage(session_dir, "stage1")
    corr1 = correlate(u1, k1)
    exposure = classify_exposure(u1, corr1)
    exposed = exposed_list(exposure)
    native = next((m["native"] for m in m1 if m.get("type") == "native-probe"), None)

    sanitization, return_checks, channels = {}, {}, []
    stage2_pairs, stage3_pairs, blocks2 = {}, {}, []
    if (session_dir / "u_stage2.log").exists():
        u2, k2, m2, _ = _read_stage(session_dir, "stage2")
        corr2 = correlate(u2, k2)
        blocks2 = strategy_blocks(m2)
        stage2_pairs = {name: corr2.pairs_for(name) for name in exposed}
        sanitization = diff_parameters(stage2_pairs)
    if (session_dir / "u_stage3.log").exists():
        u3, k3, _, _ = _read_stage(session_dir, "stage3")
        corr3 = correlate(u3, k3)
        stage3_pairs = {name: corr3.pairs_for(name) for name in exposed}
        return_checks = detect_return_checks({k: v for k, v in stage3_pairs.items() if v})
        rates = measure_rates(k3)
        if (session_dir / "k_stage3c.log").exists():
            k3c = [r for r in LogReader(session_dir / "k_stage3c.log").records()]
            rates.update(measure_rates(k3c))
        for name in exposed:
            kname = exposure[name].target or name
            rate = rates.get(kname) or rates.get(name) or 0.0
            bits = leaked_bits_per_call(name, sanitization, stage2_pairs.get(name, []), blocks2)
            channels.append(estimate_bandwidth(name, bits, rate))

    report = build_report(
        session=manifest.session, policy_name=policy.name, backend=config.backend,
        stages=manifest.summary.get("stages", []), exposure=exposure,
        sanitization=sanitization, return_checks=return_checks, channels=channels,
        native_support=native, partial=manifest.summary.get("partial", False),
        ambiguous_k=len(corr1.unmatched_k),
    )
    (session_dir / "report.json").write_text(json.dumps(report.to_doc(), indent=2) + "\n",
                                             encoding="utf-8")
    (session_dir / "report.txt").write_text(render_text(report), encoding="utf-8")
    mismatches = oracle_mismatches(policy, exposure, sanitization, return_checks,
                                   stage2_pairs, stage3_pairs, registry)
    return {"report": report.to_doc(), "oracle_mismatches": mismatches}
