#!/usr/bin/env python3
"""Drive the whole product through its real surfaces, no test harness.

Spins up the local chat-completions stub, then runs the installed CLI:
forge -> serve (curation API over a real socket; approvals via HTTP, the
same calls the browser console makes) -> validate -> run x3 strategies ->
eval -> report (tables + figures). Exits non-zero on the first failure.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import httpx

LLM_PORT = 8901
API_PORT = 8902
TOKEN = "verify-token"


def wait_for(url: str, attempts: int = 50) -> None:
    for _ in range(attempts):
        try:
            httpx.get(url, timeout=1.0)
            return
        except httpx.HTTPError:
            time.sleep(0.1)
    raise RuntimeError(f"{url} never came up")


def run_cli(*args: str) -> str:
    result = subprocess.run(
        ["dbqa-bench", *args], capture_output=True, text=True, timeout=300
    )
    if result.returncode != 0:
        raise RuntimeError(f"dbqa-bench {' '.join(args)} failed:\n{result.stdout}\n{result.stderr}")
    return result.stdout


def main() -> None:
    scripts_dir = Path(__file__).parent
    work = Path(tempfile.mkdtemp(prefix="dbqa-verify-"))
    print(f"workdir: {work}")

    corpus = work / "corpus"
    (corpus / "db1").mkdir(parents=True)
    (corpus / "db1" / "schema.sql").write_text(
        "CREATE TABLE singer (id INTEGER PRIMARY KEY, name TEXT, country TEXT, sales REAL);\n"
        "INSERT INTO singer VALUES (1, 'singer 1', 'Japan', 10.5);\n"
        "INSERT INTO singer VALUES (2, 'singer 2', 'France', 21.0);\n"
        "INSERT INTO singer VALUES (3, 'singer 3', 'Japan', 31.5);\n",
        encoding="utf-8",
    )
    (corpus / "seeds.jsonl").write_text(
        "\n".join(
            json.dumps({"seed_question": f"Seed question {i}?", "db_id": "db1",
                        "keywords": ["French singers"]})
            for i in range(2)
        ) + "\n",
        encoding="utf-8",
    )

    config = {
        "run": {"model_id": "stub-llm", "strategy": "sequential", "random_seed": 7},
        "providers": {
            "stub-llm": {"base_url": f"http://127.0.0.1:{LLM_PORT}", "model": "stub", "rpm": 100000}
        },
    }
    config_path = work / "config.json"
    config_path.write_text(json.dumps(config, indent=2), encoding="utf-8")

    llm = subprocess.Popen([sys.executable, str(scripts_dir / "llm_stub.py"), str(LLM_PORT)])
    api = None
    try:
        wait_for(f"http://127.0.0.1:{LLM_PORT}/")

        print(run_cli(
            "forge", "--corpus", str(corpus), "--drafts", str(work / "drafts"),
            "--config", str(config_path), "--model", "stub-llm",
        ).strip())

        env = dict(os.environ, DBQA_BENCH_TOKEN=TOKEN)
        api = subprocess.Popen(
            ["dbqa-bench", "serve", "--drafts", str(work / "drafts"), "--corpus", str(corpus),
             "--out", str(work / "dataset"), "--port", str(API_PORT)],
            env=env,
        )
        wait_for(f"http://127.0.0.1:{API_PORT}/health")

        headers = {"Authorization": f"Bearer {TOKEN}"}
        queue = httpx.get(
            f"http://127.0.0.1:{API_PORT}/drafts", params={"stage": "classified"}, headers=headers
        ).json()
        assert queue["total"] == 2, queue
        for item in queue["items"]:
            detail = httpx.get(
                f"http://127.0.0.1:{API_PORT}/drafts/{item['draft_id']}", headers=headers
            ).json()
            assert detail["preview"]["tables"]["singer"]["row_count"] == 5, detail["preview"]
            response = httpx.post(
                f"http://127.0.0.1:{API_PORT}/drafts/{item['draft_id']}/actions",
                json={"action": "approve", "actor": "verify"},
                headers=headers,
            )
            assert response.status_code == 200, response.text
            assert response.json()["stage"] == "confirmed"
        # a second approve must now conflict (stage gating over live HTTP)
        conflict = httpx.post(
            f"http://127.0.0.1:{API_PORT}/drafts/{queue['items'][0]['draft_id']}/actions",
            json={"action": "approve"},
            headers=headers,
        )
        assert conflict.status_code == 409, conflict.text
        print("curation API: 2 drafts approved, conflict path verified")

        print(run_cli("validate", str(work / "dataset")).strip().splitlines()[-1])

        run_dirs = []
        for strategy in ("none", "sequential", "iterative"):
            out = work / f"run-{strategy}"
            run_cli(
                "run", str(work / "dataset"), "--out", str(out),
                "--config", str(config_path), "--strategy", strategy,
                "--cache", str(work / f"cache-{strategy}.jsonl"),
            )
            transcripts = list((out / "transcripts").glob("*.json"))
            evals = list((out / "evals").glob("*.json"))
            assert len(transcripts) == 2 and len(evals) == 2, (strategy, transcripts, evals)
            run_dirs.append(out)
        print("runs: 3 strategies x 2 instances complete")

        run_cli("eval", str(run_dirs[1]), "--dataset", str(work / "dataset"),
                "--config", str(config_path))
        print("re-evaluation complete")

        report_out = work / "report"
        run_cli(
            "report", *[str(r) for r in run_dirs], "--dataset", str(work / "dataset"),
            "--out", str(report_out), "--bins", "0,1,2,4",
        )
        produced = sorted(p.name for p in report_out.rglob("*") if p.is_file())
        expected = ["metrics.csv", "metrics.json", "metrics.md",
                    "ref_scores.png", "subtask_rates.png", "valid_sql_bins.csv", "valid_sql_bins.png"]
        assert produced == expected, produced
        table = json.loads((report_out / "metrics.json").read_text())
        assert len(table["interaction"]) == 3
        assert all(r["conclusive"]["match_rate"] == 1.0 for r in table["interaction"])
        assert table["integrity_issues"] == []
        print("report: tables + figures rendered, match rates computed")

        print("E2E VERIFY: PASS")
    finally:
        llm.terminate()
        if api is not None:
            api.terminate()


if __name__ == "__main__":
    main()
