import sys

from loguru import logger


def setup_logging(log_level='INFO'):
    """Replace loguru's default sink with a single stderr sink at the given level"""
    logger.remove()
    logger.add(
        sys.stderr,
        level=log_level.upper(),
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | "
               "<cyan>{name}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
    )
    return logger
