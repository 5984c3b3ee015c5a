from .consistency_commands import setup_consistency_commands
from .fit_commands import setup_fit_commands
from .report_commands import setup_report_commands
from .simulate_commands import setup_simulate_commands
from .study_commands import setup_study_commands

__all__ = [
    "setup_consistency_commands",
    "setup_fit_commands",
    "setup_report_commands",
    "setup_simulate_commands",
    "setup_study_commands",
]
