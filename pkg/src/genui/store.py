"""Append-only on-disk page artifact store.

One directory per page (raw output, final HTML, extraction record, repair
report, client errors as separate files) plus an append-only index file, so
artifacts double as the evaluation harness's pre-cached result set. Stored
artifacts are immutable except for client-error intake, which is capped but
keeps counting past the cap.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .extract import ErrorKind, ExtractStatus, ExtractedPage
from .postchain import PostReport

DEFAULT_CLIENT_ERROR_CAP = 200


class UnknownPage(KeyError):
    pass


@dataclass
class PageArtifact:
    id: str
    session: str
    raw_output: str
    extracted: ExtractedPage
    final_html: Optional[str]
    report: Optional[PostReport]
    arm: str = ""
    timings: dict[str, float] = field(default_factory=dict)
    client_errors: list[dict[str, Any]] = field(default_factory=list)
    client_error_count: int = 0
    created: float = 0.0

    @property
    def output_error(self) -> bool:
        return self.extracted.status is ExtractStatus.ERROR


def _extracted_to_dict(page: ExtractedPage) -> dict[str, Any]:
    return {
        "html": page.html,
        "leading_noise": page.leading_noise,
        "trailing_noise": page.trailing_noise,
        "status": page.status.value,
        "error_kind": page.error_kind.value if page.error_kind else None,
    }


def _extracted_from_dict(raw: dict[str, Any]) -> ExtractedPage:
    return ExtractedPage(
        html=raw["html"],
        leading_noise=raw["leading_noise"],
        trailing_noise=raw["trailing_noise"],
        status=ExtractStatus(raw["status"]),
        error_kind=ErrorKind(raw["error_kind"]) if raw["error_kind"] else None,
    )


class ArtifactStore:
    def __init__(self, root: Path | str,
                 client_error_cap: int = DEFAULT_CLIENT_ERROR_CAP):
        self.root = Path(root)
        self.pages_dir = self.root / "pages"
        self.pages_dir.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.jsonl"
        self.client_error_cap = client_error_cap
        self._lock = threading.Lock()

    def _page_dir(self, page_id: str) -> Path:
        if not page_id.replace("-", "").isalnum():
            raise UnknownPage(page_id)
        return self.pages_dir / page_id

    def save(self, artifact: PageArtifact) -> None:
        page_dir = self._page_dir(artifact.id)
        with self._lock:
            page_dir.mkdir(parents=True, exist_ok=False)
            (page_dir / "raw.txt").write_text(artifact.raw_output,
                                              encoding="utf-8")
            if artifact.final_html is not None:
                (page_dir / "final.html").write_text(artifact.final_html,
                                                     encoding="utf-8")
            (page_dir / "extracted.json").write_text(
                json.dumps(_extracted_to_dict(artifact.extracted)))
            if artifact.report is not None:
                (page_dir / "report.json").write_text(
                    json.dumps(artifact.report.to_dict()))
            (page_dir / "errors.json").write_text(
                json.dumps({"count": 0, "errors": []}))
            (page_dir / "meta.json").write_text(json.dumps({
                "id": artifact.id,
                "session": artifact.session,
                "arm": artifact.arm,
                "timings": artifact.timings,
                "output_error": artifact.output_error,
                "created": artifact.created or time.time(),
            }))
            with open(self.index_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"id": artifact.id,
                                     "session": artifact.session,
                                     "output_error": artifact.output_error}) + "\n")

    def exists(self, page_id: str) -> bool:
        try:
            return self._page_dir(page_id).is_dir()
        except UnknownPage:
            return False

    def load(self, page_id: str) -> PageArtifact:
        page_dir = self._page_dir(page_id)
        if not page_dir.is_dir():
            raise UnknownPage(page_id)
        meta = json.loads((page_dir / "meta.json").read_text())
        errors = json.loads((page_dir / "errors.json").read_text())
        final_path = page_dir / "final.html"
        report_path = page_dir / "report.json"
        report = None
        if report_path.exists():
            raw_report = json.loads(report_path.read_text())
            from .postchain import Diagnostic
            report = PostReport(
                diagnostics=[Diagnostic(**d) for d in raw_report["diagnostics"]],
                rules_run=raw_report["rules_run"],
                skipped=raw_report["skipped"],
                changed=raw_report["changed"],
            )
        return PageArtifact(
            id=meta["id"],
            session=meta["session"],
            raw_output=(page_dir / "raw.txt").read_text(encoding="utf-8"),
            extracted=_extracted_from_dict(
                json.loads((page_dir / "extracted.json").read_text())),
            final_html=final_path.read_text(encoding="utf-8")
            if final_path.exists() else None,
            report=report,
            arm=meta.get("arm", ""),
            timings=meta.get("timings", {}),
            client_errors=errors["errors"],
            client_error_count=errors["count"],
            created=meta.get("created", 0.0),
        )

    def record_client_error(self, page_id: str,
                            payload: dict[str, Any]) -> None:
        page_dir = self._page_dir(page_id)
        if not page_dir.is_dir():
            raise UnknownPage(page_id)
        entry = {
            "message": str(payload.get("message", "")),
            "source": str(payload.get("source", "")),
            "line": int(payload.get("line", 0) or 0),
            "at": time.time(),
        }
        with self._lock:
            path = page_dir / "errors.json"
            data = json.loads(path.read_text())
            data["count"] += 1
            if len(data["errors"]) < self.client_error_cap:
                data["errors"].append(entry)
            path.write_text(json.dumps(data))

    def list_ids(self) -> list[str]:
        return sorted(p.name for p in self.pages_dir.iterdir() if p.is_dir())
