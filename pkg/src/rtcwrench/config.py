"""Engine configuration: JSON file, environment overrides, fail-fast
validation.

``validate_config`` collects every problem instead of stopping at the first,
and runs the exact same checks the admin API mutations run (catalog lookup,
param schemas, binding sets, header rules, fault policy), so a config that
validates cannot produce a config-caused runtime error later.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .catalog import Catalog, default_catalog
from .engine import CATEGORY_BINDINGS, CategoryId, EngineSettings, TransformSpec
from .errors import ConfigError, RtcWrenchError
from .harness import Codec, NetworkModel
from .proxy import FaultPolicy, HeaderRule


@dataclass
class ProxyConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8800
    upstream_url: Optional[str] = None
    http_upstream: Optional[str] = None
    header_rules: list[HeaderRule] = field(default_factory=list)
    fault_policy: FaultPolicy = field(default_factory=FaultPolicy)
    tls_cert: Optional[str] = None
    tls_key: Optional[str] = None


@dataclass
class AdminConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    bearer_token: Optional[str] = None


@dataclass
class CpuConfig:
    enabled: bool = True
    period_ms: int = 2000


@dataclass
class EngineConfig:
    settings: EngineSettings = field(default_factory=EngineSettings)
    categories: dict[CategoryId, TransformSpec] = field(default_factory=dict)
    controls_initial: dict[str, Any] = field(default_factory=dict)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    harness_network: NetworkModel = field(default_factory=NetworkModel)
    harness_codecs: Optional[dict[str, list[Codec]]] = None
    admin: AdminConfig = field(default_factory=AdminConfig)
    cpu: CpuConfig = field(default_factory=CpuConfig)


def _parse(doc: dict, problems: list[str]) -> EngineConfig:
    config = EngineConfig()

    try:
        config.settings = EngineSettings.from_doc(doc.get("settings", {}))
    except (RtcWrenchError, TypeError, ValueError) as exc:
        problems.append(f"settings: {exc}")

    for name, spec_doc in doc.get("categories", {}).items():
        try:
            category = CategoryId.parse(name)
            spec_doc = dict(spec_doc)
            spec_doc.setdefault("category", category.value)
            config.categories[category] = TransformSpec.from_doc(spec_doc)
        except (RtcWrenchError, TypeError, ValueError, KeyError) as exc:
            problems.append(f"categories.{name}: {exc}")

    for name, value in doc.get("controls_initial", {}).items():
        if not isinstance(value, (str, bool, int, float)):
            problems.append(f"controls_initial.{name}: value must be a primitive")
        else:
            config.controls_initial[name] = value

    proxy_doc = doc.get("proxy", {})
    try:
        config.proxy = ProxyConfig(
            listen_host=proxy_doc.get("listen_host", "127.0.0.1"),
            listen_port=int(proxy_doc.get("listen_port", 8800)),
            upstream_url=proxy_doc.get("upstream_url"),
            http_upstream=proxy_doc.get("http_upstream"),
            header_rules=[HeaderRule.from_doc(r)
                          for r in proxy_doc.get("header_rules", [])],
            fault_policy=FaultPolicy.from_doc(proxy_doc.get("fault_policy", {})),
            tls_cert=proxy_doc.get("tls_cert"),
            tls_key=proxy_doc.get("tls_key"))
    except (RtcWrenchError, TypeError, ValueError, KeyError) as exc:
        problems.append(f"proxy: {exc}")

    try:
        config.harness_network = NetworkModel.from_doc(
            doc.get("harness", {}).get("network", {}))
    except (RtcWrenchError, TypeError, ValueError) as exc:
        problems.append(f"harness.network: {exc}")

    codecs_doc = doc.get("harness", {}).get("codecs")
    if codecs_doc is not None:
        try:
            config.harness_codecs = {
                kind: [Codec.from_doc(c) for c in codec_list]
                for kind, codec_list in codecs_doc.items()}
        except (TypeError, ValueError, KeyError) as exc:
            problems.append(f"harness.codecs: {exc}")

    admin_doc = doc.get("admin", {})
    config.admin = AdminConfig(host=admin_doc.get("host", "127.0.0.1"),
                               port=int(admin_doc.get("port", 8000)),
                               bearer_token=admin_doc.get("bearer_token"))

    cpu_doc = doc.get("cpu", {})
    config.cpu = CpuConfig(enabled=bool(cpu_doc.get("enabled", True)),
                           period_ms=int(cpu_doc.get("period_ms", 2000)))
    if config.cpu.period_ms < 100:
        problems.append("cpu.period_ms must be >= 100")

    if config.proxy.tls_cert and not Path(config.proxy.tls_cert).exists():
        problems.append(f"proxy.tls_cert not found: {config.proxy.tls_cert}")
    if config.proxy.tls_key and not Path(config.proxy.tls_key).exists():
        problems.append(f"proxy.tls_key not found: {config.proxy.tls_key}")

    return config


def _apply_env_overrides(config: EngineConfig) -> None:
    env = os.environ
    if "RTCWRENCH_ADMIN_HOST" in env:
        config.admin.host = env["RTCWRENCH_ADMIN_HOST"]
    if "RTCWRENCH_ADMIN_PORT" in env:
        config.admin.port = int(env["RTCWRENCH_ADMIN_PORT"])
    if "RTCWRENCH_PROXY_HOST" in env:
        config.proxy.listen_host = env["RTCWRENCH_PROXY_HOST"]
    if "RTCWRENCH_PROXY_PORT" in env:
        config.proxy.listen_port = int(env["RTCWRENCH_PROXY_PORT"])
    if "RTCWRENCH_SEED" in env:
        config.settings.seed = int(env["RTCWRENCH_SEED"])


def validate_config(doc: dict, catalog: Optional[Catalog] = None) -> EngineConfig:
    """Parse and fully validate a config document; raises ConfigError with
    the complete problem list on any failure."""
    catalog = catalog or default_catalog()
    problems: list[str] = []
    config = _parse(doc, problems)

    for category, spec in config.categories.items():
        try:
            entry = catalog.get(category, spec.builtin)
            catalog.validate_params(entry, spec.params)
            bad = [b for b in spec.requested if b not in CATEGORY_BINDINGS[category]]
            if bad:
                problems.append(f"categories.{category.value}: bindings {bad} not allowed")
            if config.settings.strict and not entry.strict_safe:
                problems.append(
                    f"categories.{category.value}: builtin {spec.builtin!r} "
                    "is not strict-safe but strict mode is on")
        except RtcWrenchError as exc:
            problems.append(f"categories.{category.value}: {exc}")

    if problems:
        raise ConfigError(problems)
    _apply_env_overrides(config)
    return config


def load_config(path: str | Path, catalog: Optional[Catalog] = None) -> EngineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path} is not valid JSON: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError([f"{path}: top level must be a JSON object"])
    return validate_config(doc, catalog)
