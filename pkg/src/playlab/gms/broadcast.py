"""The default GM: echoes every client message to all players as a broadcast.

Useful as-is for chat-style or observation-only experiments, and as the
smallest possible example of a working game manager. It keeps no state at
all: system events are acknowledged with an empty reply.
"""

from __future__ import annotations

import argparse
import logging

from playlab.gms.harness import GmServer
from playlab.protocol import Message


def handle_message(m: Message) -> list[Message]:
    if m.sender == "client":
        return [
            Message(
                topic=m.topic,
                recipient="client",
                broadcast=True,
                instance_id=m.instance_id,
                params=m.params,
            )
        ]
    return []


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="playlab-gm-broadcast",
        description="Run the default broadcast game manager.",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8031)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    server = GmServer(handle_message, host=args.host, port=args.port, name="broadcast-gm/0.1")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
