import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Configuration
OUTPUT_DIR = os.getenv("DASCAP_OUTPUT_DIR", "results")
LOG_LEVEL = os.getenv("DASCAP_LOG_LEVEL", "INFO").upper()

try:
    DEFAULT_THREADS = int(os.getenv("DASCAP_THREADS", "1"))
except ValueError:
    raise ValueError("DASCAP_THREADS must be an integer")

if DEFAULT_THREADS < 1:
    raise ValueError("DASCAP_THREADS must be at least 1")
