import os

from bss_app.app import create_app, web_logger

DEFAULT_PORT = 8080

app = create_app()


def resolve_port(raw) -> int:
    """PORT from the platform, falling back to 8080 when unset, unexpanded or out of range"""
    if raw in (None, '', '$PORT'):
        return DEFAULT_PORT
    try:
        port = int(raw)
    except (ValueError, TypeError):
        web_logger.warning(f"PORT {raw!r} is not an integer; using {DEFAULT_PORT}")
        return DEFAULT_PORT
    if not 1 <= port <= 65535:
        web_logger.warning(f"PORT {port} is out of range; using {DEFAULT_PORT}")
        return DEFAULT_PORT
    return port


if __name__ == "__main__":
    port = resolve_port(os.environ.get("PORT"))
    web_logger.info(f"Serving separation requests on 0.0.0.0:{port}")
    app.run(host="0.0.0.0", port=port, debug=False)
