"""
Engine Utilities Package

Configuration parsing, tree validation, progress tracking and report writing.
"""

from .config_parser import ConfigParser
from .validators import TreeValidator
from .progress_tracker import ProgressTracker
from .report_writer import ReportWriter, RunReport

__all__ = ["ConfigParser", "TreeValidator", "ProgressTracker", "ReportWriter", "RunReport"]
