"""
JSON utilities for consistent encoding across the application.
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from src import TOOL_NAME, __version__


class JSONEncoder(json.JSONEncoder):
    """
    Custom JSON encoder to handle numpy scalars, arrays and paths.
    
    This encoder ensures consistent JSON serialization across the application,
    particularly for the numpy types that appear in metrics and configs.
    """
    
    def default(self, obj):
        """
        Encode numpy and path objects.
        
        Args:
            obj: Object to encode.
            
        Returns:
            JSON-serializable representation of the object.
        """
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, Path):
            return str(obj)
        if hasattr(obj, 'model_dump'):  # pydantic models
            return obj.model_dump(mode="json")
        return super().default(obj)


def dumps(obj, indent=None, **kwargs):
    """
    Serialize object to JSON string with consistent encoding.
    
    Keys are sorted so equal objects always produce equal text.
    
    Args:
        obj: Object to serialize.
        indent: Indentation level for pretty printing.
        **kwargs: Additional keyword arguments for json.dumps.
        
    Returns:
        JSON string representation of the object.
    """
    kwargs.setdefault("sort_keys", True)
    return json.dumps(obj, cls=JSONEncoder, indent=indent, **kwargs)


def loads(json_str, **kwargs):
    """
    Deserialize JSON string to Python object.
    
    Args:
        json_str: JSON string to deserialize.
        **kwargs: Additional keyword arguments for json.loads.
        
    Returns:
        Python object representation of the JSON string.
    """
    return json.loads(json_str, **kwargs)


def config_hash(obj: Any) -> str:
    """First 12 hex digits of the SHA-256 of the canonical JSON form."""
    canonical = dumps(obj, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def header_fields(cfg_hash: str, seed: Optional[int], **extra: Any) -> Dict[str, Any]:
    """
    Provenance fields carried by every artifact.
    
    Args:
        cfg_hash: Hash of the configuration that produced the artifact.
        seed: Seed of the producing command.
        **extra: Additional key/value pairs.
        
    Returns:
        Ordered header mapping.
    """
    fields: Dict[str, Any] = {
        "tool": TOOL_NAME,
        "version": __version__,
        "config_hash": cfg_hash,
        "seed": seed,
    }
    fields.update(extra)
    return fields


def header_lines(cfg_hash: str, seed: Optional[int], **extra: Any) -> List[str]:
    """Header rendered as `# key=value` comment lines for text artifacts."""
    return [f"# {key}={value}" for key, value in header_fields(cfg_hash, seed, **extra).items()]
