"""Configurações da aplicação."""
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Configurações do projeto."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="CCW_",
        case_sensitive=False
    )

    # App
    app_name: str = "CCW Recommender Toolkit"
    app_version: str = "0.1.0"
    debug: bool = False
    log_dir: str = "logs"

    # Modelos base
    default_dim: int = 64
    propagation_layers: int = 3
    default_variant: str = "mf"

    # Avaliação
    top_k: int = 20
    eval_batch_users: int = 1024
    rating_cell_budget: int = 50_000_000  # células float por bloco de scores

    # Co-clustering espectral
    svd_tol: float = 1e-8
    svd_maxiter: int = 300
    dense_svd_max_cells: int = 4_000_000
    kmeans_restarts: int = 10

    # Escolha de k
    vr_epsilon: float = 0.02
    vr_seed_count: int = 10

    # Paralelismo
    n_jobs: int = 1


settings = Settings()
