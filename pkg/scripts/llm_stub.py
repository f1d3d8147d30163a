#!/usr/bin/env python3
"""Deterministic local chat-completions server for end-to-end drives.

Speaks the message-array/choice-array wire format on /chat/completions and
answers by recognizing which harness prompt it received. Evaluator anchors
are checked before agent phases because review rubrics embed phrases like
"Agent's Proposed Plan:".
"""

from __future__ import annotations

import json
import sys
from http.server import BaseHTTPRequestHandler, HTTPServer

VALID_QUERY = "SELECT name, country, sales FROM singer"
EMPTY_QUERY = "SELECT name FROM singer WHERE id > 900"


def respond(prompt: str) -> str:
    if "Reviewers' Rationales and Decisions:" in prompt:
        return "The reviews agree and are well-evidenced.\nFinal Decision: Perfect"
    if "Final Decision" in prompt:
        return "The output is relevant and complete.\nFinal Decision: Perfect"
    if '"Conclusion: Match"' in prompt:
        return "The key facts are all present.\nConclusion: Match"
    if '"Score: [1/2/3/4/5]"' in prompt:
        return "Good overlap with the reference.\nScore: 4"

    if "Write one question" in prompt:
        return "How do the total sales of French singers compare with the sales of every other country?"
    if "Shorten the following" in prompt:
        return "How do French singer sales compare with the rest?"
    if "conjecture a plausible" in prompt:
        return "French singers outsell every other group."
    if "Construct database records" in prompt:
        return (
            "```sql\nINSERT INTO singer VALUES (90, 'ghost 1', 'France', 95.0);\n"
            "INSERT INTO singer VALUES (91, 'ghost 2', 'France', 97.5);\n```"
        )
    if "well-substantiated long-form answer" in prompt:
        return (
            "French singers outsell all other groups. The injected sales records show both "
            "ghost entries above ninety units, clearing every non-French figure in the table."
        )
    if "Classify the question" in prompt:
        return "Conclusive"

    if "most crucial" in prompt:
        if "Query 1:" in prompt:
            return "NO MORE QUERIES NEEDED"
        return "Retrieve every singer with country and sales figures."
    if "Proposed Plan" in prompt:
        return "Fetch every singer row, then aggregate sales per country to compare the groups."
    if "Translate the plan" in prompt:
        return f"```sql\n{VALID_QUERY};\n```\n```sql\n{EMPTY_QUERY};\n```"
    if "exactly one SQL query" in prompt:
        return f"```sql\n{VALID_QUERY};\n```"
    return (
        "Based on the retrieved records, French singers lead on sales overall, "
        "with consistent margins across the table."
    )


def make_handler() -> type[BaseHTTPRequestHandler]:
    class StubHandler(BaseHTTPRequestHandler):
        def log_message(self, *args: object) -> None:
            pass

        def do_POST(self) -> None:
            if not self.path.endswith("/chat/completions"):
                self.send_error(404)
                return
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length))
            prompt = "\n".join(m["content"] for m in body.get("messages", []))
            content = respond(prompt)
            payload = json.dumps(
                {
                    "choices": [{"message": {"content": content}, "finish_reason": "stop"}],
                    "usage": {
                        "prompt_tokens": len(prompt) // 4,
                        "completion_tokens": len(content) // 4,
                    },
                }
            ).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

    return StubHandler


def main() -> None:
    port = int(sys.argv[1]) if len(sys.argv) > 1 else 8901
    server = HTTPServer(("127.0.0.1", port), make_handler())
    print(f"llm stub listening on 127.0.0.1:{port}", flush=True)
    server.serve_forever()


if __name__ == "__main__":
    main()
