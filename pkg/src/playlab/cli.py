"""Operator command line: serve the platform and run admin maintenance.

    playlab init [--data-dir DIR]
    playlab serve [--config FILE] [--host H] [--port P] [--data-dir DIR]
    playlab game register --manifest FILE [--data-dir DIR]
    playlab game publish GAME_ID [--data-dir DIR]
    playlab game suspend GAME_ID [--data-dir DIR]
    playlab game list [--data-dir DIR]
    playlab user register USERNAME --password PW [profile flags] [--data-dir DIR]
    playlab user list [--data-dir DIR]
    playlab leaderboard GAME_ID [--top N] [--data-dir DIR]
    playlab stats export GAME_ID [--out FILE] [--data-dir DIR]

Admin subcommands operate directly on the data directory; run them before
starting the server or restart it afterwards to pick up new games.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
from dataclasses import replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from playlab.config import ConfigError, PlatformConfig, apply_env, load_config
from playlab.games import AssetStore, GameRegistry, GameRegistryError
from playlab.gm_gateway import GmFault, GmGateway
from playlab.matchmaking import MatchmakingError
from playlab.protocol import system_to_gm
from playlab.server import PlatformServer, StartupError
from playlab.storage import StoreError, open_store
from playlab.users import Profile, RegistryError, UserRegistry


def _resolve_config(args) -> PlatformConfig:
    config = load_config(args.config) if getattr(args, "config", None) else PlatformConfig()
    config = apply_env(config, os.environ)
    overrides = {}
    if getattr(args, "host", None):
        overrides["listen_host"] = args.host
    if getattr(args, "port", None) is not None:
        overrides["listen_port"] = args.port
    if getattr(args, "data_dir", None):
        overrides["data_dir"] = args.data_dir
    if overrides:
        config = replace(config, **overrides).validate()
    return config


def _open_registries(config):
    store = open_store(config.data_dir)
    assets = AssetStore(Path(config.data_dir) / "assets")
    return store, UserRegistry(store), GameRegistry(store, assets)


def cmd_init(args) -> int:
    config = _resolve_config(args)
    data_dir = Path(config.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    (data_dir / "assets").mkdir(exist_ok=True)
    open_store(data_dir).close()
    print(f"initialized data directory at {data_dir}")
    return 0


def cmd_serve(args) -> int:
    config = _resolve_config(args)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    try:
        server = PlatformServer(config)
    except (StoreError, StartupError) as exc:
        print(f"cannot start: {exc}", file=sys.stderr)
        return 1
    server.start()
    print(f"platform listening on {server.url}")

    def on_term(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, on_term)
    try:
        server.serve_until_interrupt()
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_game_register(args) -> int:
    config = _resolve_config(args)
    manifest_path = Path(args.manifest)
    try:
        manifest = tomllib.loads(manifest_path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        print(f"cannot read manifest: {exc}", file=sys.stderr)
        return 1
    bundle_dir = manifest.get("assets", {}).get("bundle_dir", "ui")
    bundle_path = (manifest_path.parent / bundle_dir).resolve()
    try:
        _, _, games = _open_registries(config)
        descriptor = games.register_game(manifest, bundle_path)
    except (StoreError, GameRegistryError, MatchmakingError, ValueError) as exc:
        print(f"register failed: {exc}", file=sys.stderr)
        return 1
    print(f"registered draft game {descriptor.game_id} ({descriptor.name})")
    print(f"GM push token: {descriptor.gm_auth_token}")
    return 0


def cmd_game_publish(args) -> int:
    config = _resolve_config(args)
    gateway = GmGateway()

    def probe(endpoint):
        gateway.dispatch_to_gm(endpoint, system_to_gm("ping"))

    try:
        _, _, games = _open_registries(config)
        descriptor = games.publish_game(args.game_id, probe)
    except (StoreError, GameRegistryError, GmFault) as exc:
        print(f"publish failed: {exc}", file=sys.stderr)
        return 1
    finally:
        gateway.close()
    print(f"published {descriptor.game_id} ({descriptor.name})")
    return 0


def cmd_game_suspend(args) -> int:
    config = _resolve_config(args)
    try:
        _, _, games = _open_registries(config)
        descriptor = games.suspend_game(args.game_id)
    except (StoreError, GameRegistryError) as exc:
        print(f"suspend failed: {exc}", file=sys.stderr)
        return 1
    print(f"suspended {descriptor.game_id}")
    return 0


def cmd_game_list(args) -> int:
    config = _resolve_config(args)
    try:
        store, _, _ = _open_registries(config)
    except StoreError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    for row in store.list_games():
        print(f"{row['game_id']}  {row['status']:>9}  players={row['required_players']}  {row['name']}")
    return 0


def cmd_user_register(args) -> int:
    config = _resolve_config(args)
    try:
        _, users, _ = _open_registries(config)
        account_id = users.register_user(
            args.username,
            args.password,
            Profile(
                age_band=args.age_band,
                gender=args.gender,
                language=args.language,
                location=args.location,
            ),
        )
    except (StoreError, RegistryError) as exc:
        print(f"register failed: {exc}", file=sys.stderr)
        return 1
    print(f"registered {args.username} as {account_id}")
    return 0


def cmd_user_list(args) -> int:
    config = _resolve_config(args)
    try:
        _, users, _ = _open_registries(config)
    except StoreError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    for account in users.list_accounts():
        profile = ",".join(
            f"{k}={account[k]}" for k in ("language", "age_band", "location") if account[k]
        )
        print(f"{account['account_id']}  {account['username']}  {profile}")
    return 0


def cmd_leaderboard(args) -> int:
    config = _resolve_config(args)
    try:
        _, users, _ = _open_registries(config)
    except StoreError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    rows = users.leaderboard(args.game_id, args.top)
    for rank, (name, total) in enumerate(rows, start=1):
        print(f"{rank:>3}. {name:<24} {total:g}")
    if not rows:
        print("(no scores yet)")
    return 0


def cmd_stats_export(args) -> int:
    config = _resolve_config(args)
    try:
        _, users, _ = _open_registries(config)
    except StoreError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    lines = [json.dumps(row) for row in users.stats_export(args.game_id)]
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {len(lines)} records to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _add_data_dir(parser):
    parser.add_argument("--data-dir", help="platform data directory")
    parser.add_argument("--config", help="TOML config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="playlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create the data directory and store")
    _add_data_dir(p)
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("serve", help="run the platform server")
    _add_data_dir(p)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_serve)

    game = sub.add_parser("game", help="experiment deployment")
    game_sub = game.add_subparsers(dest="game_command", required=True)
    p = game_sub.add_parser("register", help="register a game from a manifest")
    p.add_argument("--manifest", required=True)
    _add_data_dir(p)
    p.set_defaults(fn=cmd_game_register)
    p = game_sub.add_parser("publish", help="probe the GM and publish a draft")
    p.add_argument("game_id")
    _add_data_dir(p)
    p.set_defaults(fn=cmd_game_publish)
    p = game_sub.add_parser("suspend", help="pull a game from the catalog")
    p.add_argument("game_id")
    _add_data_dir(p)
    p.set_defaults(fn=cmd_game_suspend)
    p = game_sub.add_parser("list", help="list all games")
    _add_data_dir(p)
    p.set_defaults(fn=cmd_game_list)

    user = sub.add_parser("user", help="account maintenance")
    user_sub = user.add_subparsers(dest="user_command", required=True)
    p = user_sub.add_parser("register", help="create an account")
    p.add_argument("username")
    p.add_argument("--password", required=True)
    p.add_argument("--language")
    p.add_argument("--age-band")
    p.add_argument("--location")
    p.add_argument("--gender")
    _add_data_dir(p)
    p.set_defaults(fn=cmd_user_register)
    p = user_sub.add_parser("list", help="list registered accounts")
    _add_data_dir(p)
    p.set_defaults(fn=cmd_user_list)

    p = sub.add_parser("leaderboard", help="print a game leaderboard")
    p.add_argument("game_id")
    p.add_argument("--top", type=int, default=10)
    _add_data_dir(p)
    p.set_defaults(fn=cmd_leaderboard)

    stats = sub.add_parser("stats", help="research data export")
    stats_sub = stats.add_subparsers(dest="stats_command", required=True)
    p = stats_sub.add_parser("export", help="dump per-player stats as JSONL")
    p.add_argument("game_id")
    p.add_argument("--out")
    _add_data_dir(p)
    p.set_defaults(fn=cmd_stats_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
