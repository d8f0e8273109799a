"""
Console output for the entry scripts
"""

from typing import Dict, Optional

try:
    from rich.console import Console
    from rich.panel import Panel
    from rich.text import Text
    RICH_AVAILABLE = True
except ImportError:
    RICH_AVAILABLE = False

MARKERS = {'ok': '✓', 'fail': '✗', 'skip': '○'}

_console = Console(stderr=True) if RICH_AVAILABLE else None


def print_banner(title: str, subtitle: str = '', details: Optional[Dict[str, object]] = None) -> None:
    """Print a banner panel followed by `key: value` lines"""
    if RICH_AVAILABLE:
        body = Text(title, style="bold blue")
        if subtitle:
            body.append(f"\n{subtitle}", style="cyan")
        _console.print(Panel.fit(body))
        for key, value in (details or {}).items():
            _console.print(f"[cyan]{key}:[/cyan] [bold]{value}[/bold]")
    else:
        print("=" * 60)
        print(title)
        if subtitle:
            print(subtitle)
        print("=" * 60)
        for key, value in (details or {}).items():
            print(f"{key}: {value}")


def status_line(kind: str, message: str) -> None:
    """One status line with a ✓ / ✗ / ○ marker"""
    marker = MARKERS.get(kind, MARKERS['skip'])
    if RICH_AVAILABLE:
        color = {'ok': 'green', 'fail': 'red'}.get(kind, 'yellow')
        _console.print(f"  [{color}]{marker}[/{color}] {message}", highlight=False)
    else:
        print(f"  {marker} {message}")
