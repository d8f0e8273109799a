"""
Checkpoint Store - durable object snapshots and their manifests

Layout: <root>/<checkpoint-id>/<object>.<version>.bin, one file per object,
written by workers through commit tasks; <root>/<checkpoint-id>/manifest.json
written by the controller last, via temp file and rename.
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from ..errors import CheckpointIntegrityError
from ..utils.file_handler import FileHandler

logger = logging.getLogger(__name__)

MANIFEST = 'manifest.json'


def snapshot_name(object_id: int, version: int) -> str:
    return f"{object_id}.{version}.bin"


def snapshot_path(root: Path, checkpoint_id: str, object_id: int, version: int) -> Path:
    return Path(root) / FileHandler.safe_filename(checkpoint_id) / snapshot_name(object_id, version)


@dataclass
class CheckpointManifest:
    checkpoint_id: str
    objects: List[Tuple[int, int, str]] = field(default_factory=list)
    position: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)
    created_at: str = ''
    sequence: int = 0

    def versions(self) -> Dict[int, int]:
        return {o: v for o, v, _ in self.objects}

    def to_dict(self) -> dict:
        return {
            'id': self.checkpoint_id,
            'sequence': self.sequence,
            'created_at': self.created_at,
            'position': self.position,
            'state': self.state,
            'objects': [{'object': o, 'version': v, 'path': p} for o, v, p in self.objects],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'CheckpointManifest':
        return cls(
            checkpoint_id=data['id'],
            objects=[(int(e['object']), int(e['version']), e['path']) for e in data.get('objects', [])],
            position=data.get('position', {}),
            state=data.get('state', {}),
            created_at=data.get('created_at', ''),
            sequence=int(data.get('sequence', 0)),
        )


class CheckpointStore:
    def __init__(self, storage_path: str = None):
        """Initialize the store at a storage location"""
        if storage_path is None:
            base_dir = Path(__file__).parent.parent.parent
            storage_path = base_dir / 'output' / 'checkpoints'

        self.storage_path = FileHandler.ensure_directory(storage_path)
        self._sequence = max((m.sequence for m in self._scan()), default=0)

    def _scan(self) -> List[CheckpointManifest]:
        manifests = []
        for child in sorted(self.storage_path.iterdir()):
            manifest_file = child / MANIFEST
            if child.is_dir() and manifest_file.exists():
                try:
                    manifests.append(CheckpointManifest.from_dict(FileHandler.read_json(manifest_file)))
                except (ValueError, KeyError) as e:
                    logger.warning("ignoring unreadable manifest %s: %s", manifest_file, e)
        return manifests

    def directory_for(self, checkpoint_id: str) -> Path:
        return self.storage_path / FileHandler.safe_filename(checkpoint_id)

    def write_manifest(self, checkpoint_id: str, versions: Dict[int, int],
                       position: Optional[dict] = None, state: Optional[dict] = None) -> CheckpointManifest:
        """
        Record a checkpoint once every snapshot file is durable

        Args:
            checkpoint_id: Checkpoint name
            versions: object -> committed version
            position: program position (block, invocation counter)
            state: driver loop state

        Returns:
            The manifest written
        """
        self._sequence += 1
        manifest = CheckpointManifest(
            checkpoint_id=checkpoint_id,
            objects=[(o, v, snapshot_name(o, v)) for o, v in sorted(versions.items())],
            position=position or {},
            state=state or {},
            created_at=datetime.now().isoformat(),
            sequence=self._sequence,
        )
        self.verify(manifest)
        FileHandler.write_json_atomic(self.directory_for(checkpoint_id) / MANIFEST, manifest.to_dict())
        logger.info("checkpoint %s written (%d objects)", checkpoint_id, len(manifest.objects))
        return manifest

    def verify(self, manifest: CheckpointManifest) -> None:
        present = {p.name for p in FileHandler.list_files(self.directory_for(manifest.checkpoint_id), ['.bin'])}
        for object_id, version, name in manifest.objects:
            if name not in present:
                raise CheckpointIntegrityError(
                    f"checkpoint {manifest.checkpoint_id}: snapshot of object {object_id} v{version} is missing")

    def load(self, checkpoint_id: str) -> CheckpointManifest:
        """
        Load and verify a manifest

        Raises:
            CheckpointIntegrityError: manifest or any snapshot file is missing
        """
        manifest_file = self.directory_for(checkpoint_id) / MANIFEST
        if not manifest_file.exists():
            raise CheckpointIntegrityError(f"checkpoint {checkpoint_id} has no manifest")
        try:
            manifest = CheckpointManifest.from_dict(FileHandler.read_json(manifest_file))
        except (ValueError, KeyError) as e:
            raise CheckpointIntegrityError(f"checkpoint {checkpoint_id} manifest is unreadable: {e}") from e
        self.verify(manifest)
        return manifest

    def latest(self) -> Optional[CheckpointManifest]:
        """
        Newest manifest, verified

        Raises:
            CheckpointIntegrityError: a snapshot of the newest checkpoint is missing
        """
        manifests = self._scan()
        if not manifests:
            return None
        manifest = max(manifests, key=lambda m: m.sequence)
        self.verify(manifest)
        return manifest

    def list_checkpoints(self) -> List[str]:
        return [m.checkpoint_id for m in sorted(self._scan(), key=lambda m: m.sequence)]

    def delete(self, checkpoint_id: str) -> bool:
        return FileHandler.remove_tree(self.directory_for(checkpoint_id))
