"""playlab: a relay platform for multiplayer web-experiment games.

The platform groups players into game instances, relays anonymized JSON
messages between browser interfaces and researcher-hosted game managers
(GMs), and keeps scores and leaderboards. Researchers write only the game
UI (hosted here) and a small HTTP server of their own (the GM); everything
else, waiting rooms, instance lifecycle, disconnect handling, score
bookkeeping, is handled by this package.
"""

__version__ = "0.1.0"

from playlab.protocol import Message, SystemTopic, decode_message, encode_message

__all__ = ["Message", "SystemTopic", "decode_message", "encode_message", "__version__"]
