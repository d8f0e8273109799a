"""
File handling utilities for templum
"""

import json
import os
import re
import shutil
import tempfile
from pathlib import Path
from typing import Any, List, Optional


class FileHandler:
    """Utility class for file operations"""

    @staticmethod
    def ensure_directory(path: Path) -> Path:
        """Ensure directory exists, create if not"""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def write_bytes_atomic(path: Path, data: bytes) -> Path:
        """
        Write a file so readers never observe a partial copy

        Args:
            path: Final location
            data: File contents

        Returns:
            The final path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, 'wb') as f:
                f.write(data)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return path

    @staticmethod
    def write_json_atomic(path: Path, payload: Any) -> Path:
        """Atomic JSON write (indent=2, as every config and manifest file)"""
        text = json.dumps(payload, indent=2, ensure_ascii=False)
        return FileHandler.write_bytes_atomic(path, text.encode('utf-8'))

    @staticmethod
    def read_json(path: Path) -> Any:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)

    @staticmethod
    def list_files(directory: Path, extensions: Optional[List[str]] = None) -> List[Path]:
        """
        List files in directory with optional extension filtering

        Args:
            directory: Directory to search
            extensions: List of file extensions to filter (e.g., ['.bin', '.csv'])

        Returns:
            List of file paths
        """
        directory = Path(directory)
        if not directory.exists():
            return []

        files = []
        for file_path in directory.iterdir():
            if file_path.is_file():
                if extensions is None or file_path.suffix.lower() in extensions:
                    files.append(file_path)

        return sorted(files)

    @staticmethod
    def remove_tree(path: Path) -> bool:
        """Delete a directory tree if it exists"""
        path = Path(path)
        if path.exists():
            shutil.rmtree(path)
            return True
        return False

    @staticmethod
    def safe_filename(filename: str) -> str:
        """
        Convert an identifier to a safe file or directory name

        Args:
            filename: Original name

        Returns:
            Safe name
        """
        safe_name = re.sub(r'[<>:"/\\|?*]', '', filename)
        safe_name = safe_name.replace(' ', '_')
        safe_name = re.sub(r'_+', '_', safe_name)
        if not safe_name:
            safe_name = 'unnamed'
        return safe_name
