"""Command-line entry point for embedding extraction."""

import sys

import click

from .backbones import BACKBONES, BackboneUnavailable
from .extract import ExtractJob, extract


@click.command("embed-extract")
@click.argument("input_dir", type=click.Path())
@click.option("--model", "-m", required=True,
              type=click.Choice(sorted(BACKBONES)),
              help="Pretrained backbone to run.")
@click.option("--out", "-o", required=True, type=click.Path(),
              help="Output ATCF path.")
@click.option("--batch-size", default=32, show_default=True)
@click.option("--device", default="cpu", show_default=True,
              help="Device hint passed to the backbone (cpu, cuda, ...).")
@click.option("--labeled", is_flag=True,
              help="Treat subdirectory names as class labels.")
def main(input_dir, model, out, batch_size, device, labeled):
    """Embed every image under INPUT_DIR and write an ATCF feature file."""
    try:
        job = ExtractJob(model=model, input_dir=input_dir, output=out,
                         batch_size=batch_size, device=device, labeled=labeled)
        path = extract(job)
    except (FileNotFoundError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except BackboneUnavailable as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(4)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"wrote {path} (dim={BACKBONES[model].dim})")


if __name__ == "__main__":
    main()
