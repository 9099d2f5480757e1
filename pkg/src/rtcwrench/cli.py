"""Command line entry point. Each command is a thin wrapper over the core
package; ``run`` starts the admin API plus the live proxy listener.

Exit codes: 0 success, 1 internal error, 2 usage/config/parse error.
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click

from . import sdp
from .catalog import default_catalog
from .config import load_config
from .engine import CategoryId
from .errors import ConfigError, MalformedLine, MissingMandatory, RtcWrenchError
from .harness import Scenario, ScenarioRunner
from .stats import StatsEngine, compute_mos, read_ndjson_reports

PARSE_ERROR = 2


@click.group()
def main():
    """Programmable interception engine for the WebRTC signaling plane."""


# -- validate ---------------------------------------------------------------------

@main.command()
@click.argument("config_path", type=click.Path())
def validate(config_path):
    """Validate a config file and exit (0 ok, 2 problems)."""
    try:
        load_config(config_path)
    except ConfigError as exc:
        for problem in exc.problems:
            click.echo(f"error: {problem}", err=True)
        sys.exit(PARSE_ERROR)
    click.echo(f"{config_path}: ok")


# -- catalog ---------------------------------------------------------------------

@main.command()
@click.argument("category", required=False)
@click.option("--json", "as_json", is_flag=True, help="machine-readable manifest")
def catalog(category, as_json):
    """List builtin transforms, optionally for one category."""
    cat = default_catalog()
    try:
        selected = CategoryId.parse(category) if category else None
    except RtcWrenchError as exc:
        raise click.UsageError(str(exc))
    manifest = cat.manifest(selected)
    if as_json:
        click.echo(json.dumps(manifest, indent=2))
        return
    for entry in manifest:
        flags = "" if entry["strict_safe"] else "  [not strict-safe]"
        click.echo(f"{entry['category']}/{entry['name']}{flags}")
        click.echo(f"    {entry['description']}")
        for param in entry["params"]:
            spec = param["type"]
            if param.get("choices"):
                spec += f" {param['choices']}"
            extras = []
            if param["required"]:
                extras.append("required")
            if param.get("default") is not None:
                extras.append(f"default={param['default']}")
            suffix = f" ({', '.join(extras)})" if extras else ""
            click.echo(f"      - {param['name']}: {spec}{suffix}")


# -- munge ---------------------------------------------------------------------

def _coerce(value: str):
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(value)
    except ValueError:
        try:
            return float(value)
        except ValueError:
            return value


MUNGE_REWRITES = {
    "prefer_codec": lambda sd, p: sdp.prefer_codec(sd, p["kind"], p["codec"]),
    "set_media_policy": lambda sd, p: sdp.set_media_policy(sd, p["kind"], p["policy"]),
    "set_receiver_bandwidth": lambda sd, p: sdp.set_receiver_bandwidth(
        sd, p["kind"], int(p["kbps"])),
    "set_fmtp": lambda sd, p: sdp.set_fmtp_param(sd, p["codec"], p["key"], p["value"]),
    "modify_feedback": lambda sd, p: sdp.modify_feedback(sd, p["action"]),
}


@main.command()
@click.argument("rewrite", type=click.Choice(sorted(MUNGE_REWRITES)))
@click.argument("params", nargs=-1)
def munge(rewrite, params):
    """Apply REWRITE to the SDP on stdin (params as key=value pairs)."""
    args = {}
    for param in params:
        if "=" not in param:
            raise click.UsageError(f"params must be key=value, got {param!r}")
        key, value = param.split("=", 1)
        args[key] = _coerce(value)
    text = sys.stdin.read()
    try:
        parsed = sdp.parse_sdp(text)
        out = MUNGE_REWRITES[rewrite](parsed, args)
    except (MalformedLine, MissingMandatory) as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(PARSE_ERROR)
    except KeyError as exc:
        raise click.UsageError(f"missing param {exc.args[0]!r} for {rewrite}")
    except RtcWrenchError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(PARSE_ERROR)
    sys.stdout.write(sdp.serialize_sdp(out))


# -- stats ---------------------------------------------------------------------

@main.command()
@click.argument("report_file", type=click.Path())
def stats(report_file):
    """Derive metrics and MOS from newline-delimited report documents."""
    try:
        text = Path(report_file).read_text()
        reports = read_ndjson_reports(text)
    except (OSError, ValueError, KeyError) as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(PARSE_ERROR)
    engine = StatsEngine()
    for report in reports:
        result = engine.ingest_report(report)
        if not result.accepted:
            click.echo(f"# t={report.taken_at_ms} rejected: {result.reason}")
            continue
        if result.metrics is None:
            continue
        m = result.metrics
        score = compute_mos(m.packet_loss_rate or 0.0, m.rtt_ms or 0.0,
                            m.jitter_ms or 0.0)
        fields = [f"t={report.taken_at_ms:.0f}ms"]
        if m.send_bitrate_bps is not None:
            fields.append(f"send={m.send_bitrate_bps / 1000:.1f}kbps")
        if m.recv_bitrate_bps is not None:
            fields.append(f"recv={m.recv_bitrate_bps / 1000:.1f}kbps")
        if m.packet_loss_rate is not None:
            fields.append(f"loss={m.packet_loss_rate * 100:.2f}%")
        if m.rtt_ms is not None:
            fields.append(f"rtt={m.rtt_ms:.1f}ms")
        if m.jitter_ms is not None:
            fields.append(f"jitter={m.jitter_ms:.2f}ms")
        fields.append(f"R={score.r_factor:.1f}")
        fields.append(f"MOS={score.mos:.3f}")
        click.echo("  ".join(fields))


# -- scenario ---------------------------------------------------------------------

@main.group()
def scenario():
    """Scenario runner."""


@scenario.command("run")
@click.argument("scenario_file", type=click.Path())
@click.option("--seed", type=int, default=None, help="engine seed override")
@click.option("--transcript", "transcript_path", type=click.Path(), default=None)
def scenario_run(scenario_file, seed, transcript_path):
    """Execute a scenario file and print the transcript path."""
    from .service import ServiceState

    try:
        doc = json.loads(Path(scenario_file).read_text())
        scn = Scenario.from_doc(doc)
    except (OSError, ValueError, KeyError, RtcWrenchError) as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(PARSE_ERROR)

    state = ServiceState()
    if seed is not None:
        state.engine.settings.seed = seed
    runner = ScenarioRunner(state.harness)
    result = runner.run(scn)

    out = Path(transcript_path) if transcript_path \
        else Path(scenario_file).with_suffix(".transcript.ndjson")
    out.write_text(result.to_ndjson())
    click.echo(str(out))
    if result.error is not None:
        click.echo(f"scenario aborted at step {result.error['step']}: "
                   f"{result.error['cause']}", err=True)
        sys.exit(1)


# -- run ---------------------------------------------------------------------

@main.command()
@click.option("-c", "--config", "config_path", type=click.Path(), default=None)
def run(config_path):
    """Start the engine: admin API, WS proxy listener, CPU monitor."""
    import uvicorn

    from .service import ServiceState, create_app
    from .transports import WsProxyListener

    try:
        config = load_config(config_path) if config_path else None
    except ConfigError as exc:
        for problem in exc.problems:
            click.echo(f"config error: {problem}", err=True)
        sys.exit(PARSE_ERROR)

    state = ServiceState(config)
    app = create_app(state)
    if state.config.cpu.enabled:
        state.cpu.start()

    async def serve():
        listener = None
        if state.config.proxy.upstream_url:
            ssl_context = None
            if state.config.proxy.tls_cert and state.config.proxy.tls_key:
                import ssl
                ssl_context = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
                ssl_context.load_cert_chain(state.config.proxy.tls_cert,
                                            state.config.proxy.tls_key)
            listener = WsProxyListener(state.proxy, state.config.proxy.listen_host,
                                       state.config.proxy.listen_port,
                                       state.config.proxy.upstream_url,
                                       ssl_context=ssl_context)
            await listener.start()
        server = uvicorn.Server(uvicorn.Config(
            app, host=state.config.admin.host, port=state.config.admin.port,
            log_level="info"))
        try:
            await server.serve()
        finally:
            if listener is not None:
                await listener.stop()
            state.cpu.stop()

    try:
        asyncio.run(serve())
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
