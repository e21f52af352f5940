class ExportError(Exception):
    """Export failed; the message says exactly what is missing or broken."""
