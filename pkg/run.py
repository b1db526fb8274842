# run.py
"""Запуск pfch_sim из корня репозитория, например:

    python run.py run --config config.example.cfg
"""

from main import _main

if __name__ == "__main__":
    _main()
