import os
import sys

# rge_engine/src 경로를 Python 경로에 추가
sys.path.append(os.path.join(os.path.dirname(__file__), "rge_engine/src"))

from main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
