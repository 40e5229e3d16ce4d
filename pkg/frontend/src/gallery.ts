/**
 * Cluster and retrieval galleries. Entries are paged client-side; pagination
 * must never drop or duplicate an entry.
 */
import type { ClusterInfo, RetrievalHit, StudioApi } from "./api.js";

export interface Page<T> {
  items: T[];
  page: number;
  pageCount: number;
}

export function paginate<T>(items: T[], page: number, perPage: number): Page<T> {
  if (perPage < 1) throw new Error("perPage must be >= 1");
  const pageCount = Math.max(1, Math.ceil(items.length / perPage));
  const clamped = Math.min(Math.max(0, page), pageCount - 1);
  return {
    items: items.slice(clamped * perPage, (clamped + 1) * perPage),
    page: clamped,
    pageCount,
  };
}

export interface GalleryEntry {
  pairId: string;
  imageId: string;
  tags: string[];
  caption: string;
}

export function clusterEntries(clusters: ClusterInfo[]): GalleryEntry[] {
  const entries: GalleryEntry[] = [];
  for (const c of clusters) {
    c.exemplars.forEach((pairId, i) => {
      entries.push({
        pairId,
        imageId: c.thumbnails[i] ?? "",
        tags: c.tags,
        caption: `cluster ${c.cluster} (${c.size})`,
      });
    });
  }
  return entries;
}

export function retrievalEntries(hits: RetrievalHit[]): GalleryEntry[] {
  return hits.map((hit) => ({
    pairId: hit.id,
    imageId: "",
    tags: hit.tags,
    caption: `cos ${hit.similarity.toFixed(3)}`,
  }));
}

export interface Gallery {
  root: HTMLElement;
  setEntries(entries: GalleryEntry[]): void;
  setPage(page: number): void;
  renderedIds(): string[];
  onPick: (entry: GalleryEntry) => void;
}

export function createGallery(
  api: Pick<StudioApi, "imageUrl">,
  perPage = 12,
  doc: Document = document,
): Gallery {
  const root = doc.createElement("div");
  root.className = "gallery";
  const grid = doc.createElement("div");
  grid.className = "gallery-grid";
  const nav = doc.createElement("div");
  nav.className = "gallery-nav";
  const prev = doc.createElement("button");
  prev.textContent = "<";
  const label = doc.createElement("span");
  const next = doc.createElement("button");
  next.textContent = ">";
  nav.append(prev, label, next);
  root.append(grid, nav);

  let entries: GalleryEntry[] = [];
  let page = 0;

  const gallery: Gallery = {
    root,
    onPick: () => {},
    setEntries(next) {
      entries = next;
      page = 0;
      render();
    },
    setPage(next) {
      page = next;
      render();
    },
    renderedIds() {
      return Array.from(grid.querySelectorAll("figure")).map(
        (f) => f.getAttribute("data-pair-id") ?? "",
      );
    },
  };

  function render() {
    const view = paginate(entries, page, perPage);
    page = view.page;
    grid.replaceChildren();
    if (entries.length === 0) {
      const empty = doc.createElement("p");
      empty.className = "gallery-empty";
      empty.textContent = "No styles indexed yet. Build an index server-side to browse.";
      grid.append(empty);
    }
    for (const entry of view.items) {
      const fig = doc.createElement("figure");
      fig.setAttribute("data-pair-id", entry.pairId);
      if (entry.imageId) {
        const img = doc.createElement("img");
        img.src = api.imageUrl(entry.imageId);
        img.alt = entry.pairId;
        fig.append(img);
      }
      const cap = doc.createElement("figcaption");
      cap.textContent = `${entry.pairId} ${entry.caption} [${entry.tags.join(", ")}]`;
      fig.append(cap);
      fig.addEventListener("click", () => gallery.onPick(entry));
      grid.append(fig);
    }
    label.textContent = `${view.page + 1} / ${view.pageCount}`;
    prev.disabled = view.page === 0;
    next.disabled = view.page >= view.pageCount - 1;
  }

  prev.addEventListener("click", () => gallery.setPage(page - 1));
  next.addEventListener("click", () => gallery.setPage(page + 1));
  render();
  return gallery;
}
