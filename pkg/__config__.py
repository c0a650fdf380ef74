import os
from dotenv import load_dotenv

# Load `.env` content file
load_dotenv()

# Default run configuration and output directory for the CLI
GREENERY_CONFIG : str = os.getenv('GREENERY_CONFIG', 'pipeline.yaml')
GREENERY_OUTPUT_DIR : str = os.getenv('GREENERY_OUTPUT_DIR', '')

# Worker processes for choice, walking reach and the bootstrap
GREENERY_JOBS : int = int(os.getenv('GREENERY_JOBS', '1'))

# Console log level (DEBUG, INFO, WARNING, ERROR)
GREENERY_LOG_LEVEL : str = os.getenv('GREENERY_LOG_LEVEL', 'INFO').upper()

# Exit codes of the CLI
EXIT_OK : int = 0
EXIT_VALIDATION : int = 1
EXIT_STAGE_FAILURE : int = 2
