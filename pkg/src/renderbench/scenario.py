"""Scenario files: the full description of one experiment.

JSON, strictly validated (unknown keys are rejected with their path).
Durations are milliseconds (bare numbers are shorthand for a constant
distribution), sizes are bytes, bandwidth is bytes/second. `variant` and
`measure` accept a single value or a list; the runner executes the cross
product under one seed so A/B deltas come from one config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources as importlib_resources
from pathlib import Path
from typing import Optional

from renderbench.codec import CodecId, parse_codec
from renderbench.costs import Dist, StageCostModel
from renderbench.errors import BadCodec, ConfigError
from renderbench.metrics import MeasureMode
from renderbench.pipeline import PipelineVariant
from renderbench.workload import WorkloadConfig

MS = 1_000_000  # ns per ms


def _ms_to_ns(value: float) -> int:
    return int(round(value * MS))


def _require_keys(obj: dict, allowed: set[str], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' at {path or 'top level'}")


def _parse_dist(value, path: str, scale_ms: bool) -> Dist:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        v = float(value)
        return Dist.constant(v * MS if scale_ms else v)
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected number or distribution object")
    _require_keys(value, {"constant", "uniform", "normal"}, path)
    if len(value) != 1:
        raise ConfigError(f"{path}: exactly one of constant|uniform|normal")
    kind, params = next(iter(value.items()))
    scale = MS if scale_ms else 1
    try:
        if kind == "constant":
            return Dist.constant(float(params) * scale)
        lo, hi = params
        if kind == "uniform":
            return Dist.uniform(float(lo) * scale, float(hi) * scale)
        return Dist.normal(float(lo) * scale, float(hi) * scale)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad parameters {params!r}") from exc


@dataclass(frozen=True)
class DeviceConfig:
    pcie_bandwidth: int = 4_000_000_000  # bytes/s
    pcie_latency_ns: int = 0
    gpu_sharing: str = "fifo"  # fifo | ps

    def __post_init__(self):
        if self.pcie_bandwidth <= 0:
            raise ConfigError("pcie_bandwidth must be positive")
        if self.gpu_sharing not in ("fifo", "ps"):
            raise ConfigError(f"gpu_sharing must be fifo|ps, got {self.gpu_sharing!r}")


@dataclass(frozen=True)
class ResourceConfig:
    cpu_cores: int = 8
    memory_contention_c: float = 0.0  # AL/CP slowdown = 1 + c*(n-1)

    def __post_init__(self):
        if self.cpu_cores < 1:
            raise ConfigError("cpu_cores must be >= 1")
        if self.memory_contention_c < 0:
            raise ConfigError("memory_contention_c must be >= 0")


@dataclass(frozen=True)
class ProxyConfig:
    codec: CodecId = CodecId.RLE
    compress_cost: Dist = field(default_factory=lambda: Dist.constant(0))
    sp_cost: Dist = field(default_factory=lambda: Dist.constant(0))
    ipc_cost: Dist = field(default_factory=lambda: Dist.constant(0))
    net_up: Dist = field(default_factory=lambda: Dist.constant(0))
    net_down: Dist = field(default_factory=lambda: Dist.constant(0))


@dataclass(frozen=True)
class AgentSpec:
    policy: str = "none"  # none | scripted | reactive | replay
    cv_latency_ns: int = 72_700_000
    decide_latency_ns: int = 1_900_000
    apm_cap: float = 804.0
    # scripted
    rate_per_s: float = 20.0
    count: int = 0
    start_ns: int = 0
    # reactive / replay
    table: dict[int, bytes] = field(default_factory=dict)
    default_action: bytes = b"NOOP"
    tau: float = 0.95
    timeout_ns: int = 2_000_000_000
    records: int = 0
    record_delay_ns: int = 50_000_000

    def __post_init__(self):
        if self.policy not in ("none", "scripted", "reactive", "replay"):
            raise ConfigError(f"unknown agent policy {self.policy!r}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must be in [0, 1]")
        if min(self.cv_latency_ns, self.decide_latency_ns, self.timeout_ns) < 0:
            raise ConfigError("agent latencies must be >= 0")


@dataclass(frozen=True)
class InstanceConfig:
    costs: StageCostModel
    attr: Dist = field(default_factory=lambda: Dist.uniform(6 * MS, 9 * MS))
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    agent: AgentSpec = field(default_factory=AgentSpec)
    stagger_ns: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    mode: str  # des | harness
    variants: tuple[PipelineVariant, ...]
    measures: tuple[MeasureMode, ...]
    seed: int
    instances: tuple[InstanceConfig, ...]
    passes: Optional[int] = None
    duration_ns: Optional[int] = None
    replicates: int = 1
    device: DeviceConfig = field(default_factory=DeviceConfig)
    resources: ResourceConfig = field(default_factory=ResourceConfig)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    hooks_enabled: bool = True
    queries: str = "double"  # double | single | off
    server_clock_offset_ns: int = 0
    sync_rounds: int = 5
    raw: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mode not in ("des", "harness"):
            raise ConfigError(f"mode must be des|harness, got {self.mode!r}")
        if (self.passes is None) == (self.duration_ns is None):
            raise ConfigError("exactly one of 'passes' and 'duration_ms' is required")
        if self.queries not in ("double", "single", "off"):
            raise ConfigError(f"queries must be double|single|off, got {self.queries!r}")
        if not self.instances:
            raise ConfigError("at least one instance is required")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)


def _parse_enum_list(value, enum_cls, path: str):
    items = value if isinstance(value, list) else [value]
    out = []
    for item in items:
        try:
            out.append(enum_cls(item))
        except ValueError:
            valid = ", ".join(e.value for e in enum_cls)
            raise ConfigError(f"{path}: {item!r} is not one of {valid}") from None
    if not out:
        raise ConfigError(f"{path}: empty list")
    return tuple(out)


def _parse_workload(obj: dict, path: str) -> WorkloadConfig:
    _require_keys(obj, {"width", "height", "objects", "classes", "placement",
                        "object_size"}, path)
    kwargs = {}
    if "width" in obj:
        kwargs["width"] = int(obj["width"])
    if "height" in obj:
        kwargs["height"] = int(obj["height"])
    if "objects" in obj:
        kwargs["object_count"] = int(obj["objects"])
    if "classes" in obj:
        kwargs["class_ids"] = tuple(int(c) for c in obj["classes"])
    if "placement" in obj:
        kwargs["placement"] = obj["placement"]
    if "object_size" in obj:
        kwargs["object_size"] = int(obj["object_size"])
    return WorkloadConfig(**kwargs)


def _parse_agent(obj: dict, path: str) -> AgentSpec:
    _require_keys(obj, {"policy", "cv_latency_ms", "decide_latency_ms", "apm_cap",
                        "rate_per_s", "count", "start_ms", "table",
                        "default_action", "tau", "timeout_ms", "records",
                        "record_delay_ms"}, path)
    kwargs: dict = {"policy": obj.get("policy", "none")}
    if "cv_latency_ms" in obj:
        kwargs["cv_latency_ns"] = _ms_to_ns(obj["cv_latency_ms"])
    if "decide_latency_ms" in obj:
        kwargs["decide_latency_ns"] = _ms_to_ns(obj["decide_latency_ms"])
    if "apm_cap" in obj:
        kwargs["apm_cap"] = float(obj["apm_cap"])
    if "rate_per_s" in obj:
        kwargs["rate_per_s"] = float(obj["rate_per_s"])
    if "count" in obj:
        kwargs["count"] = int(obj["count"])
    if "start_ms" in obj:
        kwargs["start_ns"] = _ms_to_ns(obj["start_ms"])
    if "table" in obj:
        kwargs["table"] = {int(k): str(v).encode() for k, v in obj["table"].items()}
    if "default_action" in obj:
        kwargs["default_action"] = str(obj["default_action"]).encode()
    if "tau" in obj:
        kwargs["tau"] = float(obj["tau"])
    if "timeout_ms" in obj:
        kwargs["timeout_ns"] = _ms_to_ns(obj["timeout_ms"])
    if "records" in obj:
        kwargs["records"] = int(obj["records"])
    if "record_delay_ms" in obj:
        kwargs["record_delay_ns"] = _ms_to_ns(obj["record_delay_ms"])
    return AgentSpec(**kwargs)


def _parse_instance(obj: dict, path: str) -> InstanceConfig:
    _require_keys(obj, {"al_ms", "rd_ms", "frame_bytes", "attr_ms", "workload",
                        "agent", "stagger_ms"}, path)
    for required in ("al_ms", "rd_ms"):
        if required not in obj:
            raise ConfigError(f"{path}: missing required key '{required}'")
    workload = _parse_workload(obj.get("workload", {}), f"{path}.workload")
    if "frame_bytes" in obj:
        frame_bytes = _parse_dist(obj["frame_bytes"], f"{path}.frame_bytes", scale_ms=False)
    else:
        frame_bytes = Dist.constant(workload.width * workload.height * 4)
    costs = StageCostModel(
        al=_parse_dist(obj["al_ms"], f"{path}.al_ms", scale_ms=True),
        rd=_parse_dist(obj["rd_ms"], f"{path}.rd_ms", scale_ms=True),
        frame_bytes=frame_bytes,
    )
    attr = (_parse_dist(obj["attr_ms"], f"{path}.attr_ms", scale_ms=True)
            if "attr_ms" in obj else Dist.uniform(6 * MS, 9 * MS))
    agent = _parse_agent(obj.get("agent", {}), f"{path}.agent")
    return InstanceConfig(
        costs=costs,
        attr=attr,
        workload=workload,
        agent=agent,
        stagger_ns=_ms_to_ns(obj.get("stagger_ms", 0)),
    )


def parse_scenario(data: dict, name: str = "scenario") -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    _require_keys(data, {"name", "mode", "variant", "measure", "seed", "passes",
                         "duration_ms", "replicates", "device", "resources",
                         "proxy", "instances", "hooks", "queries", "clock"},
                  "top level")
    for required in ("mode", "instances"):
        if required not in data:
            raise ConfigError(f"missing required key '{required}' at top level")

    device_obj = data.get("device", {})
    _require_keys(device_obj, {"pcie_bandwidth_bytes_per_s", "pcie_latency_ms",
                               "gpu_sharing"}, "device")
    device = DeviceConfig(
        pcie_bandwidth=int(device_obj.get("pcie_bandwidth_bytes_per_s", 4_000_000_000)),
        pcie_latency_ns=_ms_to_ns(device_obj.get("pcie_latency_ms", 0)),
        gpu_sharing=device_obj.get("gpu_sharing", "fifo"),
    )

    res_obj = data.get("resources", {})
    _require_keys(res_obj, {"cpu_cores", "memory_contention_c"}, "resources")
    resources_cfg = ResourceConfig(
        cpu_cores=int(res_obj.get("cpu_cores", 8)),
        memory_contention_c=float(res_obj.get("memory_contention_c", 0.0)),
    )

    proxy_obj = data.get("proxy", {})
    _require_keys(proxy_obj, {"codec", "compress_ms", "sp_ms", "ipc_ms",
                              "net_up_ms", "net_down_ms"}, "proxy")
    try:
        codec = parse_codec(proxy_obj.get("codec", "rle"))
    except BadCodec as exc:
        raise ConfigError(f"proxy.codec: {exc}") from None
    proxy = ProxyConfig(
        codec=codec,
        compress_cost=_parse_dist(proxy_obj.get("compress_ms", 0), "proxy.compress_ms", True),
        sp_cost=_parse_dist(proxy_obj.get("sp_ms", 0), "proxy.sp_ms", True),
        ipc_cost=_parse_dist(proxy_obj.get("ipc_ms", 0), "proxy.ipc_ms", True),
        net_up=_parse_dist(proxy_obj.get("net_up_ms", 0), "proxy.net_up_ms", True),
        net_down=_parse_dist(proxy_obj.get("net_down_ms", 0), "proxy.net_down_ms", True),
    )

    inst_value = data["instances"]
    if isinstance(inst_value, dict):
        _require_keys(inst_value, {"count", "al_ms", "rd_ms", "frame_bytes",
                                   "attr_ms", "workload", "agent", "stagger_ms"},
                      "instances")
        count = int(inst_value.get("count", 1))
        template = {k: v for k, v in inst_value.items() if k != "count"}
        inst_list = [template] * count
    elif isinstance(inst_value, list):
        inst_list = inst_value
    else:
        raise ConfigError("instances must be a list or an object with 'count'")
    instances = tuple(
        _parse_instance(obj, f"instances[{i}]") for i, obj in enumerate(inst_list)
    )

    clock_obj = data.get("clock", {})
    _require_keys(clock_obj, {"server_offset_ms", "sync_rounds"}, "clock")

    return ScenarioConfig(
        name=data.get("name", name),
        mode=data["mode"],
        variants=_parse_enum_list(data.get("variant", "BASELINE"), PipelineVariant,
                                  "variant"),
        measures=_parse_enum_list(data.get("measure", "FULL"), MeasureMode, "measure"),
        seed=int(data.get("seed", 1)),
        passes=int(data["passes"]) if "passes" in data else None,
        duration_ns=_ms_to_ns(data["duration_ms"]) if "duration_ms" in data else None,
        replicates=int(data.get("replicates", 1)),
        device=device,
        resources=resources_cfg,
        proxy=proxy,
        instances=instances,
        hooks_enabled=bool(data.get("hooks", True)),
        queries=data.get("queries", "double"),
        server_clock_offset_ns=_ms_to_ns(clock_obj.get("server_offset_ms", 0)),
        sync_rounds=int(clock_obj.get("sync_rounds", 5)),
        raw=data,
    )


def bundled_scenario_names() -> list[str]:
    root = importlib_resources.files("renderbench") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(path_or_name: str) -> ScenarioConfig:
    """Load a scenario from a file path or a bundled scenario name."""
    path = Path(path_or_name)
    if path.exists():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return parse_scenario(data, name=path.stem)
    candidate = importlib_resources.files("renderbench") / "scenarios" / f"{path_or_name}.json"
    if candidate.is_file():
        return parse_scenario(json.loads(candidate.read_text()), name=path_or_name)
    raise ConfigError(
        f"no such scenario file or bundled name: {path_or_name!r} "
        f"(bundled: {', '.join(bundled_scenario_names())})"
    )
