"""Command line interface: generate, serve, render, replay."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .camera import view_scene
from .loop import FINISHED, PAUSED, Session, SessionConfig, replay_trajectory
from .render import RenderOptions, render
from .scene import load_scene


@click.group()
def main():
    """Visual-feedback agent engine for 3D scene synthesis."""


def _gateway_config(spec: str) -> dict:
    kind, _, arg = spec.partition(":")
    if kind == "remote":
        return {"kind": "remote"}
    if kind == "replay":
        if not arg:
            raise click.BadParameter("replay gateway needs a file: --vlm replay:<file>")
        return {"kind": "replay", "path": arg}
    if kind == "scripted":
        return {"kind": "scripted", "policy": arg or "grid-layout"}
    raise click.BadParameter(f"unknown gateway {spec!r}")


@main.command()
@click.argument("instruction")
@click.option("--max-steps", default=20, show_default=True, help="Step budget T_M.")
@click.option("--vlm", default="scripted:grid-layout", show_default=True,
              help="remote | replay:<file> | scripted:<policy>")
@click.option("--assets", default="procedural", show_default=True,
              type=click.Choice(["procedural", "remote"]))
@click.option("--no-visual-prompt", is_flag=True, help="Disable labels and the axis HUD.")
@click.option("--no-collision-check", is_flag=True, help="Disable collision system messages.")
@click.option("--width", default=1024, show_default=True)
@click.option("--height", default=768, show_default=True)
@click.option("--out", default=None, help="Session directory (default sessions/<id>).")
@click.option("--session-id", default=None, help="Fixed session id (default random).")
def generate(instruction, max_steps, vlm, assets, no_visual_prompt, no_collision_check,
             width, height, out, session_id):
    """Run one generation session to completion."""
    config = SessionConfig(
        max_steps=max_steps,
        visual_prompting=not no_visual_prompt,
        collision_check=not no_collision_check,
        width=width,
        height=height,
        gateway=_gateway_config(vlm),
        assets={"kind": assets},
    )
    session = Session.create(instruction, config, directory=out, session_id=session_id)
    session.run()
    click.echo(f"session {session.id}: {session.status} after {session.t} step(s)")
    click.echo(f"output: {session.directory}")
    if session.status == PAUSED:
        click.echo(f"paused on gateway error: {session.last_error}", err=True)
        sys.exit(1)


@main.command()
@click.option("--addr", default="127.0.0.1:8023", show_default=True)
@click.option("--data", default="sessions", show_default=True, help="Session data directory.")
def serve(addr, data):
    """Start the REST/WebSocket session service."""
    from .service import serve as run_service

    run_service(addr, data)


@main.command(name="render")
@click.argument("scene_file", type=click.Path(exists=True))
@click.option("--view", default="iso", show_default=True,
              type=click.Choice(["top", "front", "side", "iso"], case_sensitive=False))
@click.option("--zoom", default=1.0, show_default=True)
@click.option("--width", default=1024, show_default=True)
@click.option("--height", default=768, show_default=True)
@click.option("--no-visual-prompt", is_flag=True)
@click.option("--out", default="render.png", show_default=True)
def render_cmd(scene_file, view, zoom, width, height, no_visual_prompt, out):
    """Render a saved scene.json to a PNG."""
    scene = load_scene(scene_file)
    cam = view_scene(scene, view, zoom, aspect=width / height)
    opts = RenderOptions(width=width, height=height, visual_prompting=not no_visual_prompt)
    render(scene, cam, opts).save(out)
    click.echo(f"wrote {out}")


@main.command()
@click.argument("trajectory", type=click.Path(exists=True))
@click.option("--verify", is_flag=True, help="Assert the re-executed final scene hash.")
@click.option("--out", default=None, help="Write the reconstructed scene to this directory.")
def replay(trajectory, verify, out):
    """Re-execute a trajectory log and optionally verify the scene hash."""
    scene, report = replay_trajectory(trajectory)
    click.echo(f"replayed {report.steps} step(s); final scene hash {report.final_hash}")
    if out:
        from .scene import save_scene

        save_scene(scene, out)
        click.echo(f"wrote scene to {out}")
    if verify:
        if report.ok:
            click.echo("verify: OK (hash chain and per-step scene hashes match)")
        else:
            click.echo(
                f"verify: FAILED (expected {report.expected_hash}, "
                f"mismatched steps {report.mismatched_steps})",
                err=True,
            )
            sys.exit(1)


if __name__ == "__main__":
    main()
