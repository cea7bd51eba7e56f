#!/usr/bin/env python3
"""
Generate a task set for evaluation runs
Usage: generate_tasks.py [count] [seed] [families]
"""

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from cleaner.tasks import TASK_FAMILIES, TaskGenerator

if __name__ == "__main__":
    count = int(sys.argv[1]) if len(sys.argv) > 1 else 64
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    families = sys.argv[3].split(",") if len(sys.argv) > 3 else list(TASK_FAMILIES)
    print(f"🎲 Generating {count} tasks ({', '.join(families)}, seed {seed})...")

    tasks = TaskGenerator.generate_tasks(families, count, seed)
    TaskGenerator.save_task_set(tasks, "data/tasks.json")
    print(f"✅ Generated {len(tasks)} tasks")
    print("📁 Saved to: data/tasks.json")
