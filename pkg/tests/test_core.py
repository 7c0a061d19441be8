import logging
import runpy
import sys
from pathlib import Path

import pytest

from app.core.errors import ConfigError, DataValidationError, GraphRerankError, NumericError
from app.core.logging_config import configure_logging
from app.core.settings import Settings
from app.util.helpers import append_jsonl, rng_for, sub_seed


def test_settings_normalize_level():
    assert Settings(log_level=" debug ").log_level == "DEBUG"


def test_settings_read_environment(monkeypatch):
    monkeypatch.setenv("GRAPH_RERANK_WORKERS", "3")
    monkeypatch.setenv("GRAPH_RERANK_LOG_LEVEL", "warning")
    settings = Settings()
    assert settings.workers == 3
    assert settings.log_level == "WARNING"


def test_error_exit_codes():
    assert ConfigError("x").exit_code == 2
    assert DataValidationError("x").exit_code == 3
    assert NumericError("x").exit_code == 4
    err = NumericError("Non-finite gradient in parameter block 'phi.weight'")
    assert isinstance(err, GraphRerankError)
    assert "phi.weight" in err.detail


def test_configure_logging_replaces_handler():
    logger = configure_logging("debug")
    configure_logging("info")
    assert len(logger.handlers) == 1
    assert logger.level == logging.INFO


def test_configure_logging_rejects_unknown_level():
    with pytest.raises(ConfigError):
        configure_logging("chatty")


def test_sub_seed_is_stable_and_named():
    assert sub_seed(7, "train.init") == sub_seed(7, "train.init")
    assert sub_seed(7, "train.init") != sub_seed(7, "train.shuffle")
    assert sub_seed(7, "train.init") != sub_seed(8, "train.init")
    assert rng_for(1, "a").random() == rng_for(1, "a").random()


def test_append_jsonl(tmp_path):
    path = tmp_path / "sub" / "log.jsonl"
    append_jsonl(path, {"epoch": 1})
    append_jsonl(path, {"epoch": 2})
    assert path.read_text().splitlines() == ['{"epoch": 1}', '{"epoch": 2}']


def test_docs_config_documents_the_package(monkeypatch):
    root = Path(__file__).resolve().parents[1]
    monkeypatch.setattr(sys, "path", list(sys.path))
    conf = runpy.run_path(str(root / "docs" / "source" / "conf.py"))
    assert Path(conf["PROJECT_ROOT"]).resolve() == root
    assert {"numpy", "scipy", "pydantic"} <= set(conf["intersphinx_mapping"])
    assert set(conf["autodoc_mock_imports"]) == {"scipy", "tqdm", "dotenv"}
