import os
from dotenv import load_dotenv

load_dotenv()

class Settings:
    # Discretization
    T_MAX = float(os.getenv("IFE_T_MAX", "40"))
    CELLS = int(os.getenv("IFE_CELLS", "4096"))
    GRID = os.getenv("IFE_GRID", "geometric")
    GRID_SCALE = float(os.getenv("IFE_GRID_SCALE", "1.0"))

    # Tolerances
    QUAD_RTOL = float(os.getenv("IFE_QUAD_RTOL", "1e-8"))
    CHECK_RTOL = float(os.getenv("IFE_CHECK_RTOL", "1e-9"))

    # Sampling
    SAMPLES = int(os.getenv("IFE_SAMPLES", "10000"))
    PAIRS = int(os.getenv("IFE_PAIRS", "100"))
    SEED = int(os.getenv("IFE_SEED", "0"))

    # Quadrature blocks (max entries evaluated at once)
    BLOCK_SIZE = int(os.getenv("IFE_BLOCK_SIZE", "2000000"))
    NORM_CELLS = int(os.getenv("IFE_NORM_CELLS", "1024"))

    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

settings = Settings()
