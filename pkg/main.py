"""Корневая точка входа.

Некоторые окружения ожидают `main.py` в корне репозитория.
Обёртка делегирует настоящей точке входа:
    pfch_sim/main.py

Сохраняет семантику `__name__ == '__main__'`, аргументы командной строки
и код выхода.
"""

from __future__ import annotations

import runpy
import sys
from pathlib import Path


def _main() -> None:
    repo_root = Path(__file__).resolve().parent
    real_main = repo_root / "pfch_sim" / "main.py"

    if not real_main.exists():
        raise SystemExit(f"Entrypoint not found: {real_main}")

    # модули симулятора импортируются по имени (`from grid import GridSpec`)
    sim_dir = str(real_main.parent)
    if sim_dir not in sys.path:
        sys.path.insert(0, sim_dir)

    # относительные пути (--config, --out) считаются от текущей папки пользователя
    runpy.run_path(str(real_main), run_name="__main__")


if __name__ == "__main__":
    _main()
