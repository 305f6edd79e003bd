"""Sub-slot task-oriented dialog: generation, tracking and evaluation."""
from .agent import agent_step, run_session
from .config import AgentConfig, ConfigError, NoiseConfig, load_domain
from .core import DialogAct, DialogRecord, Goal, SlotState, Turn, act, validate_record
from .evalgen import OfflineReport, OnlineReport, eval_offline, eval_online, generate_corpus
from .knowledge import build_index, disambiguate, score

__version__ = "0.1.0"

__all__ = [
    "AgentConfig", "ConfigError", "DialogAct", "DialogRecord", "Goal", "NoiseConfig", "OfflineReport",
    "OnlineReport", "SlotState", "Turn", "act", "agent_step", "build_index", "disambiguate", "eval_offline",
    "eval_online", "generate_corpus", "load_domain", "run_session", "score", "validate_record",
]
