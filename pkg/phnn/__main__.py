"""
Entry point of ``python -m phnn``
"""
from phnn import app

if __name__ == "__main__":
    app.cli.main(prog_name="phnn")
