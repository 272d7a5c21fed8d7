import argparse
import logging
import pathlib
import re
import sys
from rich.markdown import Markdown
from rich.console import Console
from rich.table import Table
from rich.panel import Panel
from rich.theme import Theme
from dysonlab.identities import ALL_IDENTITIES
from dysonlab.scenario import COMMANDS, RunResult, logs_handler, parse_config, run
from dysonlab.exceptions import (
    DysonLabException,
    InvalidConfig,
    InvalidIdentityCode,
    InvalidModel,
    NumericalFailure,
)

console = Console(theme=Theme({"code": "white on #2D3138"}))


def print_identities_table() -> None:
    table = Table(title="dysonlab Identities", show_lines=True)
    table.add_column("Code", justify="center")
    table.add_column("Rationale")
    table.add_column("Tolerance", justify="right")

    for identity in sorted(ALL_IDENTITIES, key=lambda x: x.code):
        table.add_row(
            identity.code,
            Markdown(f"**{identity.title}**\n\n{identity.rationale}"),
            f"{identity.tolerance:.0e}",
        )

    console.print(table)


def format_path(path: pathlib.Path) -> str:
    """Artifact paths relative to the working directory when they live below it."""
    path = pathlib.Path(path)
    try:
        path = path.resolve().relative_to(pathlib.Path.cwd())
    except ValueError:
        pass
    if str(path.parent) == ".":
        return f"[bold]{path.name}[/bold]"
    return f"[dim]{path.parent}/[/][bold]{path.name}[/bold]"


def error_title(error: DysonLabException) -> str:
    kind = "Numerical failure" if isinstance(error, NumericalFailure) else "Invalid input"
    return f"{kind}: {type(error).__name__} (exit {error.code})"


def format_error(message: str, title: str = "Error") -> Panel:
    return Panel(
        message,
        title=f"[bold red]{title}[/bold red]",
        width=80,
        padding=(1, 2),
    )


def print_summary(result: RunResult, out: pathlib.Path) -> None:
    for path in result.artifacts:
        console.print(f"[green]wrote[/green] {format_path(path)}")
    for violation in result.violations:
        z = f"{violation.z.real:.6g}{violation.z.imag:+.6g}i"
        console.print(
            f"[{violation.code}] [bold red]{violation.title}[/bold red] "
            f"at z = {z}: defect {violation.defect:.3e} > {violation.tolerance:.0e}"
        )
    if result.errors:
        taus = [f"{error['tau']:.6g}" for error in result.errors if "tau" in error]
        located = f" at tau = {', '.join(taus[:5])}" if taus else ""
        console.print(
            format_error(
                f"[bold red]{len(result.errors)} point(s) failed numerically{located}.[/]"
                "\n\nThe remaining artifacts were written. The failing points are listed in "
                f"{format_path(out / 'errors.json')}",
                title=f"Numerical failure (exit {NumericalFailure.code})",
            )
        )


def run_command(args) -> None:
    if args.config is None:
        console.print(
            format_error(
                f"[bold red]The {args.command} command needs a scenario.[/]"
                "\n\nPass one with [code]--config <path>[/].",
                title=f"Missing scenario (exit {InvalidConfig.code})",
            )
        )
        sys.exit(InvalidConfig.code)
    try:
        config = parse_config(args.config)
        # CLI args override the seed, jobs, output and identity selection in the config file
        config.override(
            seed=args.seed,
            jobs=args.jobs,
            out=args.out,
            select=tuple(args.select),
            ignore=tuple(args.ignore),
        )
    except InvalidConfig as error:
        console.print(
            format_error(
                "[bold red]Your scenario file isn't formatted "
                "correctly and couldn't be parsed.[/]"
                f"\n\n{error}."
                f"\n\ndysonlab read the invalid scenario from {format_path(args.config)}",
                title=error_title(error),
            )
        )
        sys.exit(error.code)
    except InvalidModel as error:
        console.print(
            format_error(
                "[bold red]Couldn't build a model from the definition provided.[/]"
                "\n\nUsually this is because the bare matrix and the self-energy disagree "
                "in dimension, or a variance profile is not symmetric. "
                f"The error message was:\n\n[code]{error}[/]"
                f"\n\ndysonlab read the model from {format_path(args.config)}",
                title=error_title(error),
            )
        )
        sys.exit(error.code)

    try:
        result = run(args.command, config)
    except InvalidIdentityCode as error:
        console.print(
            format_error(
                "[bold red]Invalid identity code.[/]"
                f"\n\n{error}. Run [code]dyson-lab identities[/] to see all valid codes.",
                title=error_title(error),
            )
        )
        sys.exit(error.code)

    print_summary(result, config.output)
    if result.exit_code:
        sys.exit(result.exit_code)


def identity_code(value, pattern=re.compile(r"[A-Z]+\d+")):
    if not pattern.match(value):
        console.print(
            format_error(
                f"[bold red]You specified an invalid identity code:[/] [bold]{value}[/]"
                "\n\nIdentity codes for --select and --ignore look like "
                "[bold]P100[/] or [bold]B101[/]. "
                "You can see all defined identity codes by running "
                "[code]dyson-lab identities[/]."
            )
        )
        raise argparse.ArgumentTypeError("invalid format for identity code")
    return value


def main():
    parser = argparse.ArgumentParser(
        description=(
            "Solve the matrix Dyson equation and study its density of states. "
            "Run `dyson-lab identities` to see the checked identities."
        )
    )
    parser.add_argument(
        "command",
        choices=COMMANDS + ("identities",),
        help="pipeline to run",
    )
    parser.add_argument(
        "--config",
        type=pathlib.Path,
        help="path to the YAML or JSON scenario",
    )
    parser.add_argument(
        "--out",
        type=pathlib.Path,
        help="directory for the artifacts, overrides 'output' in the scenario",
    )
    parser.add_argument(
        "--jobs",
        type=int,
        help="number of worker threads, defaults to the available cores",
    )
    parser.add_argument(
        "--seed",
        type=int,
        help="random seed for Monte-Carlo draws and sampled verification points",
    )
    parser.add_argument(
        "--ignore",
        nargs="+",
        metavar="CODE",
        required=False,
        type=identity_code,
        help="identity codes to exclude from verification, like 'B101'",
        default=[],
    )
    parser.add_argument(
        "--select",
        nargs="+",
        metavar="CODE",
        required=False,
        type=identity_code,
        help="only verify the specified identity codes, like 'P100'",
        default=[],
    )
    parser.add_argument(
        "-v",
        "--verbose",
        help="show debugging logs",
        action="store_const",
        dest="loglevel",
        default=logging.WARNING,
        const=logging.DEBUG,
    )
    args = parser.parse_args()
    logs_handler.setLevel(args.loglevel)

    if args.command == "identities":
        print_identities_table()
        return

    try:
        run_command(args)
    except DysonLabException as error:
        console.print(format_error(str(error), title=error_title(error)))
        sys.exit(error.code)
    except Exception:
        console.print(
            "[bold red]dyson-lab encountered an unexpected issue.[/]"
            "\n\nWe're not sure what happened, but you can see the traceback below.\n"
        )
        raise


if __name__ == "__main__":
    main()
