"""Output handler for toolkit progress messages and results."""

import sys
from enum import Enum
from typing import Any, Callable, Optional

from colorama import Fore, Style, init

# Initialize colorama for colored output
init(autoreset=True)


class OutputEventType(Enum):
    """Types of output events emitted by the command-line tools."""
    SYSTEM = "system"        # Start/finish of a command
    PROGRESS = "progress"    # Pipeline milestones
    RESULT = "result"        # Numeric results (bpv, sizes, bins)
    WARNING = "warning"      # Recoverable policy events
    ERROR = "error"          # Fatal errors before a non-zero exit


class OutputHandler:
    """Handles console output with pluggable output functions."""

    def __init__(self, output_function: Optional[Callable] = None, quiet: bool = False):
        """Initialize with optional custom output function.

        Args:
            output_function: Custom function to handle output. Should accept:
                - message: str - The message to output
                - event_type: OutputEventType - Type of event
                - metadata: dict - Additional event metadata
            quiet: Suppress PROGRESS events on the default console output
        """
        self.output_function = output_function or self._default_console_output
        self.quiet = quiet

    def notify(self, message: str,
               event_type: OutputEventType = OutputEventType.SYSTEM,
               metadata: Optional[dict] = None) -> None:
        """Emit a message with event information.

        Args:
            message: The message to output
            event_type: Type of event
            metadata: Additional metadata about the event
        """
        self.output_function(message, event_type, metadata or {})

    def result(self, label: str, value: Any, unit: str = "") -> None:
        """Emit a single labelled numeric result."""
        if isinstance(value, float):
            text = f"{label}: {value:.6f}{(' ' + unit) if unit else ''}"
        else:
            text = f"{label}: {value}{(' ' + unit) if unit else ''}"
        self.notify(text, OutputEventType.RESULT, {"label": label, "value": value, "unit": unit})

    def _default_console_output(self, message: str, event_type: OutputEventType,
                                metadata: Optional[dict] = None) -> None:
        """Default console output with colored formatting."""
        if event_type == OutputEventType.PROGRESS:
            if not self.quiet:
                print(f"{Fore.CYAN}{message}{Style.RESET_ALL}", file=sys.stderr)
        elif event_type == OutputEventType.RESULT:
            print(f"{Fore.GREEN}{message}{Style.RESET_ALL}")
        elif event_type == OutputEventType.WARNING:
            print(f"{Fore.YELLOW}warning: {message}{Style.RESET_ALL}", file=sys.stderr)
        elif event_type == OutputEventType.ERROR:
            print(f"{Fore.RED}error: {message}{Style.RESET_ALL}", file=sys.stderr)
        else:
            print(f"{Style.BRIGHT}{message}{Style.RESET_ALL}", file=sys.stderr)


def create_console_output_handler(quiet: bool = False) -> OutputHandler:
    """Create an output handler that prints to console."""
    return OutputHandler(quiet=quiet)


def create_custom_output_handler(output_function: Callable) -> OutputHandler:
    """Create an output handler with custom output function."""
    return OutputHandler(output_function)
