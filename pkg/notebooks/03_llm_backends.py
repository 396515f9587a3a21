"""
LLM backends
============

Replay reads recorded completions keyed by a request hash, mock answers from
regex rules, and live talks to a chat-completions endpoint.
"""

import os

from _fixture import REPLAY

from dnpsql import CompletionRequest, LiveBackend, MockBackend, cache_key, complete, load_replay
from dnpsql.llm import read_records

records = read_records(REPLAY / "mini20.jsonl")
rec = records[0]
print(len(records), "recorded completions; first key", rec.key[:16])

# the key covers the prompt and every sampling parameter
req = rec.request
assert cache_key(req) == rec.key
print(complete(load_replay(REPLAY / "mini20.jsonl"), req)[:120])

# a mock backend for dry runs
mock = MockBackend([(r".*Question: ([^\n]+)\n", lambda m, r: f"SQL: SELECT '{m.group(1)}'")])
print(complete(mock, CompletionRequest("mock", "Question: how many?\n")))

# live calls only when a key is configured
if os.environ.get("DNP_API_KEY"):
    live = LiveBackend("https://api.openai.com/v1")
    print(complete(live, CompletionRequest("gpt-3.5-turbo", "Say hi.", max_tokens=8)))
else:
    print("DNP_API_KEY unset; skipping the live call")
