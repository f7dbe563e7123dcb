"""Path and tour solvers: A* over the weighted tile grid and a nearest
neighbor + 2-opt tour for connecting buildings."""

from __future__ import annotations

import heapq
import math

import numpy as np


class NoPath(Exception):
    pass


def astar(terrain, start: tuple[int, int], goal: tuple[int, int]) -> tuple[list, float]:
    """Minimal-cost 4-connected path from start to goal; entering a tile
    costs that tile's move_cost. Heuristic: Manhattan distance times the
    cheapest tile cost (admissible). Ties prefer smaller (y, x).

    Returns (path including both endpoints, total cost). Raises NoPath.
    """
    move_cost = terrain.move_cost
    passable = terrain.passable
    h, w = move_cost.shape
    sx, sy = start
    gx, gy = goal
    if not (0 <= sx < w and 0 <= sy < h and 0 <= gx < w and 0 <= gy < h):
        raise ValueError("start/goal out of bounds")
    if not passable[sy, sx] or not passable[gy, gx]:
        raise NoPath(f"start or goal impassable: {start} -> {goal}")
    if start == goal:
        return [start], 0.0

    min_cost = float(move_cost[passable].min())

    def heur(x, y):
        return (abs(x - gx) + abs(y - gy)) * min_cost

    g_score = {start: 0.0}
    came: dict[tuple[int, int], tuple[int, int]] = {}
    open_heap = [(heur(sx, sy), sy, sx)]
    closed = set()

    while open_heap:
        f, y, x = heapq.heappop(open_heap)
        node = (x, y)
        if node in closed:
            continue
        closed.add(node)
        if node == goal:
            path = [node]
            while node != start:
                node = came[node]
                path.append(node)
            path.reverse()
            return path, g_score[goal]
        base = g_score[node]
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if not (0 <= nx < w and 0 <= ny < h) or not passable[ny, nx]:
                continue
            tentative = base + float(move_cost[ny, nx])
            neighbor = (nx, ny)
            if tentative < g_score.get(neighbor, math.inf):
                g_score[neighbor] = tentative
                came[neighbor] = node
                heapq.heappush(open_heap,
                               (tentative + heur(nx, ny), ny, nx))
    raise NoPath(f"no route {start} -> {goal}")


def tour_length(points: list[tuple[float, float]], order: list[int]) -> float:
    total = 0.0
    n = len(order)
    for i in range(n):
        ax, ay = points[order[i]]
        bx, by = points[order[(i + 1) % n]]
        total += math.hypot(ax - bx, ay - by)
    return total


def tsp_route(points: list[tuple[float, float]]) -> list[int]:
    """Approximate shortest cyclic tour: nearest-neighbor construction from
    index 0, then 2-opt until no improving swap. Returns point indices."""
    n = len(points)
    if n == 0:
        raise ValueError("need at least one point")
    if len(set(points)) != n:
        raise ValueError("points must be distinct")
    if n <= 2:
        return list(range(n))

    pts = np.asarray(points, dtype=np.float64)
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))

    # nearest neighbor from the lowest-index point
    unvisited = set(range(1, n))
    tour = [0]
    while unvisited:
        last = tour[-1]
        best = min(unvisited, key=lambda j: (dist[last, j], j))
        tour.append(best)
        unvisited.remove(best)

    # 2-opt: reverse tour[i:j+1] while any swap shortens the cycle
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                a, b = tour[i - 1], tour[i]
                c, d = tour[j], tour[(j + 1) % n]
                if a == c or b == d:
                    continue
                delta = (dist[a, c] + dist[b, d]) - (dist[a, b] + dist[c, d])
                if delta < -1e-12:
                    tour[i:j + 1] = reversed(tour[i:j + 1])
                    improved = True
        # loop until a full pass makes no change
    return tour


def is_two_opt_optimal(points: list[tuple[float, float]],
                       tour: list[int]) -> bool:
    """True when no single 2-opt edge swap shortens the tour."""
    n = len(tour)
    if n < 4:
        return True
    pts = np.asarray(points, dtype=np.float64)
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    for i in range(1, n - 1):
        for j in range(i + 1, n):
            a, b = tour[i - 1], tour[i]
            c, d = tour[j], tour[(j + 1) % n]
            if a == c or b == d:
                continue
            if (dist[a, c] + dist[b, d]) - (dist[a, b] + dist[c, d]) < -1e-12:
                return False
    return True
