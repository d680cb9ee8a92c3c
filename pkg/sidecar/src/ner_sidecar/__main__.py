"""Run the service: ``python -m ner_sidecar``.

Environment: NER_MODEL (spaCy package name or ``lexicon:PATH``),
NER_PORT (default 8020).
"""
from __future__ import annotations

import logging
import os

import uvicorn

from .app import create_app


def main() -> None:
    logging.basicConfig(level=logging.INFO)
    port = int(os.environ.get("NER_PORT", "8020"))
    uvicorn.run(create_app(), host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()
