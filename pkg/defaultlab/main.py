# defaultlab/main.py
"""
Командная строка:

    defaultlab run <config> [--seed N] [--backend exact|mc] [--paths N] [--out DIR] [--format F]
    defaultlab check <config>
    defaultlab list-fixtures

Коды выхода: 0 - нет FAIL (неприменимые проверки SKIP), 1 - есть FAIL, 2 - ошибка конфигурации,
3 - ошибка вычислений или ввода-вывода.
"""
import argparse
import json
import logging
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from defaultlab import __version__
from defaultlab.errors import ConfigError, DefaultLabError
from defaultlab.fixtures.catalog import list_fixtures
from defaultlab.schemas.experiment import Backend, ExperimentConfig, ReportFormat
from defaultlab.services.experiment import run_experiment
from defaultlab.services.reporting import emit_report, render_text
from defaultlab.utils.logger import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _validation_message(path: Path, error: ValidationError) -> str:
    lines = [f"{path}: документ не прошёл проверку"]
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "<корень>"
        lines.append(f"  {where}: {item['msg']}")
    return "\n".join(lines)


def load_config(path: str) -> ExperimentConfig:
    """
    Прочитать документ эксперимента (TOML или JSON по расширению).

    Raises:
        ConfigError: файл не найден, синтаксическая ошибка (со строкой и столбцом)
            или ошибка валидации (с путём к полю).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: не удалось прочитать ({e.strerror or e})") from e
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: синтаксическая ошибка TOML: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: синтаксическая ошибка JSON: {e.msg} (строка {e.lineno}, столбец {e.colno})") from e
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_validation_message(path, e)) from e


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defaultlab",
        description="Разложение момента дефолта на конечных пространствах: проверки, цены и премии",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Уровень логирования (по умолчанию DEFAULTLAB_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "Полный прогон с отчётом"), ("check", "Только проверки тождеств")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="Документ эксперимента (.toml или .json)")
        p.add_argument("--seed", type=int, default=None, help="Зерно генератора (приоритетнее DEFAULTLAB_SEED)")
        p.add_argument("--backend", choices=[b.value for b in Backend], default=None)
        p.add_argument("--paths", type=int, default=None, help="Число траекторий Монте-Карло")
        p.add_argument("--out", default=None, help="Каталог артефактов (по умолчанию output.dir)")
        p.add_argument("--format", dest="fmt", choices=[f.value for f in ReportFormat], default=None)

    sub.add_parser("list-fixtures", help="Список встроенных моделей")
    return parser


def _run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None and args.seed < 0:
        raise ConfigError("--seed должен быть неотрицательным")
    if args.paths is not None and args.paths < 1:
        raise ConfigError("--paths должен быть не меньше 1")
    report = run_experiment(
        config,
        seed=args.seed,
        backend=Backend(args.backend) if args.backend else None,
        paths=args.paths,
        identities_only=args.command == "check",
    )
    fmt = ReportFormat(args.fmt) if args.fmt else config.output.format
    emit_report(report, args.out or config.output.dir, fmt)
    if args.command == "check" or fmt == ReportFormat.text:
        sys.stdout.write(render_text(report))
    return EXIT_OK if report.ok else EXIT_FAIL


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = create_parser().parse_args(argv)
    setup_logging(args.log_level)

    if args.command == "list-fixtures":
        for fixture in list_fixtures():
            print(f"{fixture.name:<26} {fixture.description}")
        return EXIT_OK

    try:
        return _run(args)
    except ConfigError as e:
        logger.error(f"Ошибка конфигурации: {e}")
        print(f"ошибка конфигурации: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DefaultLabError, OSError) as e:
        logger.error(f"Ошибка выполнения: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        print(f"ошибка выполнения: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
