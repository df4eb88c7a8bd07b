#!/usr/bin/env python3
"""
SplitFlow Logging Setup
structlog on top of the standard logging module
"""

import logging
import sys

import structlog

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

LEVELS = {
    'DEBUG': logging.DEBUG,
    'INFO': logging.INFO,
    'WARNING': logging.WARNING,
    'ERROR': logging.ERROR,
}


def configure_logging(level: str = 'WARNING', json: bool = False) -> None:
    """Route structlog events through stdlib handlers on stderr"""
    numeric = LEVELS.get(str(level).upper(), logging.WARNING)

    logging.basicConfig(level=numeric, format=LOG_FORMAT, stream=sys.stderr, force=True)

    renderer = (structlog.processors.JSONRenderer() if json
                else structlog.processors.KeyValueRenderer(key_order=['event']))

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )
